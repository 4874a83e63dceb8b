"""Follower interaction graph, leader attachment and formation offsets.

Nodes are numbered ``1..N``; node ``0`` is the leader.  An edge ``(i, j)``
means follower ``i`` receives information from ``j`` (``j`` is an
out-neighbor of ``i``).  Edges to ``0`` are the leader attachments.
"""
from __future__ import annotations

import graphlib
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ConsistencyError, HypothesisError
from .policy import DEFAULT_POLICY

LEADER = 0


@dataclass(frozen=True)
class LeaderNetwork:
    """Adjacency of the followers plus the set of leader-connected followers."""

    adjacency: np.ndarray
    leader_in_neighbors: frozenset

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=int)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise HypothesisError(f"adjacency must be a non-empty square matrix, got {a.shape}")
        if not np.all((a == 0) | (a == 1)):
            raise HypothesisError("adjacency entries must be 0 or 1")
        if np.any(np.diag(a)):
            raise HypothesisError("adjacency must have a zero diagonal (no self loops)")
        n = a.shape[0]
        leaders = frozenset(int(i) for i in self.leader_in_neighbors)
        if not leaders:
            raise HypothesisError("at least one follower must receive the leader's samples")
        bad = [i for i in leaders if not 1 <= i <= n]
        if bad:
            raise HypothesisError(f"leader neighbors {sorted(bad)} are not follower ids 1..{n}")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "leader_in_neighbors", leaders)
        object.__setattr__(self, "_out", {i + 1: tuple(int(j) + 1 for j in np.flatnonzero(a[i]))
                                          for i in range(n)})
        try:
            self.topological_order()
        except graphlib.CycleError as exc:
            cycle = [int(c) for c in exc.args[1]]
            raise HypothesisError(f"follower graph has a cycle through {cycle}") from None

    @classmethod
    def from_edges(cls, n, edges):
        """Build from ``(i, j)`` pairs; pairs with ``j == 0`` attach ``i`` to the leader."""
        a = np.zeros((n, n), dtype=int)
        leaders = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if not 1 <= i <= n or not 0 <= j <= n:
                raise HypothesisError(f"edge ({i}, {j}) references a node outside 0..{n}")
            if j == LEADER:
                leaders.add(i)
            else:
                a[i - 1, j - 1] = 1
        return cls(a, frozenset(leaders))

    @property
    def n(self):
        return self.adjacency.shape[0]

    @property
    def followers(self):
        return range(1, self.n + 1)

    def edges(self):
        """All edges of the follower graph plus leader attachments, sorted."""
        out = [(i, LEADER) for i in sorted(self.leader_in_neighbors)]
        rows, cols = np.nonzero(self.adjacency)
        out += [(int(r) + 1, int(c) + 1) for r, c in zip(rows, cols)]
        return sorted(out)

    def out_neighbors(self, i):
        """Out-neighbors of ``i`` among the followers (leader excluded)."""
        return list(self._out[i])

    def extended_out_neighbors(self, i):
        """Out-neighbors of ``i`` in the graph including the leader node."""
        head = [LEADER] if self.indicator(i) else []
        return head + self.out_neighbors(i)

    def out_degree(self, i):
        return len(self._out[i])

    def indicator(self, i):
        return 1 if i in self.leader_in_neighbors else 0

    def topological_order(self):
        """Followers ordered so every out-neighbor precedes the node that listens to it."""
        ts = graphlib.TopologicalSorter({i: self.out_neighbors(i) for i in self.followers})
        return list(ts.static_order())


def verify_global_sink(net):
    """True iff every follower has a directed path to the leader."""
    return len(_reaching(net)) == net.n


def require_global_sink(net):
    if not verify_global_sink(net):
        orphans = [i for i in net.followers if i not in _reaching(net)]
        raise HypothesisError(f"leader is not a global sink; followers {orphans} cannot reach it")


def _reaching(net):
    reaches = set()
    for i in net.topological_order():
        if net.indicator(i) or any(j in reaches for j in net.out_neighbors(i)):
            reaches.add(i)
    return reaches


def hierarchical_levels(net):
    """Partition followers into levels ``V_1, V_2, ...``.

    ``V_1`` holds leader-connected followers with no follower out-neighbors;
    ``V_k`` holds the remaining followers whose out-neighbors all lie in
    earlier levels.
    """
    require_global_sink(net)
    placed = set()
    first = {i for i in net.followers if net.indicator(i) and not net.out_neighbors(i)}
    levels = [first]
    placed |= first
    while len(placed) < net.n:
        nxt = {i for i in net.followers
               if i not in placed and set(net.out_neighbors(i)) <= placed}
        if not nxt:
            raise HypothesisError("levels cannot be completed; graph violates the sink hypothesis")
        levels.append(nxt)
        placed |= nxt
    return [sorted(v) for v in levels]


def weights(net, i):
    """``(w_leader, w_follower)`` mixing weights of follower ``i``."""
    total = net.indicator(i) + net.out_degree(i)
    if total == 0:
        raise HypothesisError(f"follower {i} has neither the leader nor an out-neighbor")
    return net.indicator(i) / total, 1.0 / total


OffsetTable = Mapping[tuple, np.ndarray]


@dataclass
class FormationSpec:
    """Local offsets ``F^{ij}`` for every edge ``(i, j)`` (``j`` may be 0).

    ``table`` is either a fixed mapping, a list of mappings indexed by the
    sampling index ``k`` (the last one is reused past the end), or a callable
    ``k -> mapping``.  Missing edges default to the zero vector only when
    ``dim`` is given and ``strict`` is false.
    """

    table: OffsetTable | list | Callable[[int], OffsetTable] = field(default_factory=dict)
    dim: int | None = None
    strict: bool = False

    def local(self, k):
        if callable(self.table):
            tab = self.table(k)
        elif isinstance(self.table, list):
            tab = self.table[min(k, len(self.table) - 1)] if self.table else {}
        else:
            tab = self.table
        return {(int(i), int(j)): np.asarray(v, dtype=float) for (i, j), v in tab.items()}

    def is_constant(self):
        if callable(self.table):
            return False
        if isinstance(self.table, list):
            return len(self.table) <= 1
        return True

    def offset(self, k, i, j, tab=None):
        tab = self.local(k) if tab is None else tab
        if (i, j) in tab:
            return tab[(i, j)]
        if self.dim is not None and not self.strict:
            return np.zeros(self.dim)
        raise ConsistencyError(f"no local offset defined for edge ({i}, {j}) at k={k}")

    @classmethod
    def zero(cls, dim):
        return cls({}, dim=dim)


def resolve_offsets(net, spec, k, atol=None):
    """Telescope local offsets into ``F^{i0}`` for every follower.

    Returns a dict ``i -> F^{i0}(t_k)``.  Each follower is resolved through
    its lowest-index out-neighbor (the leader first, when attached) and the
    result is checked against every other out-neighbor.
    """
    atol = DEFAULT_POLICY.offset_atol if atol is None else atol
    tab = spec.local(k)
    resolved = {LEADER: None}
    how = {}
    for level in hierarchical_levels(net):
        for i in level:
            nbrs = net.extended_out_neighbors(i)
            cands = []
            for j in nbrs:
                f = spec.offset(k, i, j, tab)
                cands.append((j, f if j == LEADER else f + resolved[j]))
            j0, f0 = cands[0]
            for j, f in cands[1:]:
                scale = max(1.0, float(np.max(np.abs(f0))), float(np.max(np.abs(f))))
                if np.max(np.abs(f - f0)) > atol * scale:
                    p0 = [i] + _path(how, j0)
                    p1 = [i] + _path(how, j)
                    raise ConsistencyError(
                        f"offsets of follower {i} disagree at k={k}: path {p0} gives {f0.tolist()}, "
                        f"path {p1} gives {f.tolist()}", paths=(p0, p1))
            resolved[i] = f0
            how[i] = j0
    del resolved[LEADER]
    return resolved


def _path(how, j):
    path = [j]
    while j != LEADER:
        j = how[j]
        path.append(j)
    return path
