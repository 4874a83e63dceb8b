"""Epoch-wise steering laws.

Every follower is described to the controller by a *tracking model*
``(A_c, B_c)`` together with a linear measurement ``M`` (the tracked state
is ``M x``) and an actuation map from the designed input ``v`` to the
plant input ``u``.  Plain state tracking uses ``(A, B)``, ``M = I`` and
``u = v``; output tracking and homogenization are the two other cases.

Times handed to the laws must lie on the half-step grid of the epoch (the
RK4 stage times), see :class:`EpochContext`.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matcore
from .errors import (ControllabilityError, DimensionError, ProtocolError, RankError,
                     SingularMatrixError)
from .gramian import GramianPropagator, assert_controllable, gramian
from .policy import DEFAULT_POLICY
from .topology import weights

DEADZONE_MODES = ("hold", "zero")


# --------------------------------------------------------------------------
# tracking models


@dataclass(frozen=True)
class TrackingModel:
    """How the controller sees one follower."""

    A: np.ndarray
    B: np.ndarray
    M: np.ndarray
    kind: str = "state"
    K: np.ndarray | None = None
    W: np.ndarray | None = None
    pinv: np.ndarray | None = None
    CA: np.ndarray | None = None

    def measure(self, x):
        return self.M @ x

    def actuate(self, x, v):
        if self.kind == "state":
            return v
        if self.kind == "homogenized":
            return self.K @ x + self.W @ v
        return self.pinv @ (v - self.CA @ x)

    def closed_loop(self, plant):
        """``(A_cl, B_cl, K_u, L_u)`` with ``x' = A_cl x + B_cl v`` and ``u = K_u x + L_u v``."""
        n, m = plant.n, plant.m
        if self.kind == "state":
            Ku, Lu = np.zeros((m, n)), np.eye(m)
        elif self.kind == "homogenized":
            Ku, Lu = self.K, self.W
        else:
            Ku, Lu = -self.pinv @ self.CA, self.pinv
        return plant.A + plant.B @ Ku, plant.B @ Lu, Ku, Lu

    @classmethod
    def state(cls, follower):
        return cls(follower.A, follower.B, np.eye(follower.n))

    @classmethod
    def output(cls, follower):
        if follower.C is None:
            raise DimensionError(f"follower {follower.id} has no output map C")
        p = follower.C.shape[0]
        pinv = _output_pinv(follower)
        return cls(np.zeros((p, p)), np.eye(p), follower.C, "output",
                   pinv=pinv, CA=follower.C @ follower.A)

    @classmethod
    def homogenized(cls, follower, gains):
        K, W = gains.K[follower.id], gains.W[follower.id]
        return cls(gains.A, gains.B, np.eye(follower.n), "homogenized", K=K, W=W)


def _output_pinv(follower):
    C, B = follower.C, follower.B
    CB = C @ B
    if matcore.rank(CB) != CB.shape[0]:
        raise RankError(f"follower {follower.id}: C*B is not full row rank")
    return B.T @ C.T @ matcore.solve(CB @ CB.T, np.eye(CB.shape[0]))


def output_transform(follower, v, x):
    """Input making the output obey ``y' = v``: ``B^T C^T (C B B^T C^T)^{-1} (v - C A x)``."""
    pinv = _output_pinv(follower)
    return pinv @ (matcore.as_vector(v) - follower.C @ follower.A @ matcore.as_vector(x))


@dataclass
class HomogenizationGains:
    A: np.ndarray
    B: np.ndarray
    K: dict = field(default_factory=dict)
    W: dict = field(default_factory=dict)


def homogenize(followers, target):
    """Feedback ``u = K x + W v`` giving every follower the dynamics ``target = (A, B)``.

    Requires each ``B^i`` to have full row rank.
    """
    A = matcore.as_matrix(target[0], "target A")
    B = matcore.as_matrix(target[1], "target B")
    if not assert_controllable(A, B):
        raise ControllabilityError("homogenization target pair is not controllable")
    gains = HomogenizationGains(A, B)
    for f in followers:
        if f.A.shape != A.shape or f.B.shape[0] != B.shape[0]:
            raise DimensionError(f"follower {f.id}: dimensions do not match the target pair")
        if matcore.rank(f.B) != f.n:
            raise RankError(f"follower {f.id}: B is not full row rank")
        right = f.B.T @ matcore.solve(f.B @ f.B.T, np.eye(f.n))
        gains.K[f.id] = right @ (A - f.A)
        gains.W[f.id] = right @ B
    return gains


# --------------------------------------------------------------------------
# epoch context


@dataclass(frozen=True)
class AgentEpoch:
    """Quantities one follower freezes at ``t_k`` for the epoch ``(t_k, t_{k+1}]``."""

    id: int
    model: TrackingModel
    state0: np.ndarray        # tracked state at t_k
    expm_AT: np.ndarray       # e^{A T_k}
    drift: np.ndarray         # e^{A T_k} state0
    G: np.ndarray             # G(T_k)
    G_inv: np.ndarray
    propagator: GramianPropagator
    expA: np.ndarray          # e^{A s} at every half-step s
    gain: np.ndarray          # B^T e^{A^T (t_{k+1} - t)} G^{-1} at every half-step
    gain_rate: np.ndarray     # time derivative of ``gain``
    free: np.ndarray          # e^{A s} state0 at every half-step
    packet_gain: np.ndarray   # G P(t) at every half-step
    target: np.ndarray | None  # x0(t_k) - F^{i0}(t_k), when the leader is visible
    direct_target: np.ndarray  # x0(t_k) - F^{i0}(t_k), always (oracles only)
    offsets: dict             # F^{ij}(t_k) for follower out-neighbors j
    w_leader: float
    w_follow: float


@dataclass(frozen=True)
class EpochContext:
    k: int
    t_start: float
    t_end: float
    steps: int
    agents: dict
    leader_sample: np.ndarray
    deadzone_steps: int = DEFAULT_POLICY.deadzone_steps
    deadzone_mode: str = "hold"
    lead: float = 0.0

    @property
    def T(self):
        return self.t_end - self.t_start

    @property
    def h(self):
        return self.T / self.steps

    def index(self, t):
        """Half-step index of grid time ``t``."""
        any_agent = next(iter(self.agents.values()))
        return any_agent.propagator.index(t)

    def in_deadzone(self, idx):
        return self.lead == 0.0 and idx <= 2 * self.deadzone_steps


def build_epoch(k, t_start, t_end, steps, models, states, net, leader_sample, resolved, local,
                deadzone_steps=None, deadzone_mode="hold", lead=0.0):
    """Freeze everything the laws need for epoch ``k``.

    ``states`` maps follower id to its plant state at ``t_k``; ``resolved`` and
    ``local`` are the resolved ``F^{i0}`` and local ``F^{ij}`` offsets.
    """
    if deadzone_mode not in DEADZONE_MODES:
        raise ValueError(f"deadzone_mode must be one of {DEADZONE_MODES}")
    deadzone_steps = DEFAULT_POLICY.deadzone_steps if deadzone_steps is None else deadzone_steps
    T = t_end - t_start
    half = 2 * steps
    agents = {}
    for i, model in models.items():
        z0 = model.measure(states[i])
        G = gramian(model.A, model.B, T)
        G_inv = matcore.solve(G, np.eye(G.shape[0]))
        eAT = matcore.expm(model.A, T)
        step = matcore.expm(model.A, T / half)
        expA = np.empty((half + 1,) + model.A.shape)
        expA[0] = np.eye(model.A.shape[0])
        for s in range(half):
            expA[s + 1] = expA[s] @ step
        expA[half] = eAT
        # B^T e^{A^T (T - s)} G^{-1} = B^T (e^{A (T - s)})^T G^{-1}
        gain = np.einsum("ji,skj,kl->sil", model.B, expA[::-1], G_inv)
        gain_rate = -np.einsum("ji,skj,kl->sil", model.A @ model.B, expA[::-1], G_inv)
        prop = GramianPropagator(model.A, model.B, t_start, t_end, steps=half, lead=lead)
        packet_gain = np.einsum("ij,sjk->sik", G, prop.pmatrix_grid)
        wl, wf = weights(net, i)
        direct_target = leader_sample - resolved[i]
        agents[i] = AgentEpoch(
            id=i, model=model, state0=z0, expm_AT=eAT, drift=eAT @ z0, G=G, G_inv=G_inv,
            propagator=prop, expA=expA, gain=gain, gain_rate=gain_rate, free=expA @ z0,
            packet_gain=packet_gain,
            target=direct_target if net.indicator(i) else None,
            direct_target=direct_target,
            offsets={j: local[(i, j)] for j in net.out_neighbors(i)},
            w_leader=wl, w_follow=wf,
        )
    return EpochContext(k, float(t_start), float(t_end), int(steps), agents,
                        np.asarray(leader_sample, dtype=float), deadzone_steps,
                        deadzone_mode, float(lead))


# --------------------------------------------------------------------------
# laws


@dataclass(frozen=True)
class NeighborPacket:
    """What follower ``sender`` transmits to the followers listening to it."""

    sender: int
    z: np.ndarray
    drift_target: np.ndarray


def steering_input(A, B, T, x_start, x_target, s):
    """Minimum-energy input at time ``s`` in ``[0, T]`` of the transfer ``x_start -> x_target``.

    ``B^T e^{A^T (T - s)} G(T)^{-1} (x_target - e^{A T} x_start)``; the
    closed-form counterpart of :func:`direct_law` outside any epoch context.
    """
    G = gramian(A, B, T)
    eta = matcore.as_vector(x_target) - matcore.expm(A, T) @ matcore.as_vector(x_start)
    return B.T @ matcore.expm(A.T, T - s) @ matcore.solve(G, eta)


def direct_law(ctx, i, t):
    """Minimum-energy input steering ``i`` straight to ``x0(t_k) - F^{i0}(t_k)``."""
    ae = ctx.agents[i]
    idx = ctx.index(t)
    return ae.gain[idx] @ (ae.direct_target - ae.drift)


def steering_term(ctx, net, i, packets, idx):
    """The vector multiplied by ``B^T e^{A^T(t_{k+1}-t)} G^{-1}`` in the distributed law."""
    ae = ctx.agents[i]
    xi = np.zeros_like(ae.drift)
    if ae.w_leader:
        xi += ae.w_leader * (ae.target - ae.drift)
    for j in net.out_neighbors(i):
        pk = packets.get(j)
        if pk is None:
            raise ProtocolError(f"follower {i}: missing packet from out-neighbor {j} "
                                f"(epoch {ctx.k})")
        xi += ae.w_follow * (pk.z + pk.drift_target - ae.drift - ae.offsets[j])
    return xi


def distributed_law(ctx, net, i, packets, t):
    """Distributed input of follower ``i`` built from its neighbors' packets."""
    idx = ctx.index(t)
    return ctx.agents[i].gain[idx] @ steering_term(ctx, net, i, packets, idx)


def packet_z(ctx, j, state_t, idx, xi=None):
    ae = ctx.agents[j]
    if ctx.in_deadzone(idx):
        if ctx.deadzone_mode == "zero":
            return np.zeros_like(ae.drift)
        if xi is None:
            raise ProtocolError(f"follower {j}: hold deadzone needs the sender's steering term")
        return np.array(xi, dtype=float)
    prop = ae.propagator
    if not prop.pmatrix_ok(idx):
        c = prop.condition_grid[idx]
        raise SingularMatrixError(f"follower {j}, epoch {ctx.k}: gain matrix singular at "
                                  f"half-step {idx} (cond1 ~ {c:.3g}); widen the deadzone", c)
    return ae.packet_gain[idx] @ (state_t - ae.free[idx])


def make_packet(ctx, j, x_j_t, t, xi=None):
    """Packet of follower ``j`` at grid time ``t``.

    ``x_j_t`` is the tracked state of ``j`` at ``t``.  Inside the deadzone the
    ill-conditioned product is not formed: ``z`` is either zero or, in
    ``hold`` mode, the sender's own steering term ``xi`` (the right-limit of
    ``z`` at ``t_k``).
    """
    idx = ctx.index(t)
    z = packet_z(ctx, j, matcore.as_vector(x_j_t), idx, xi)
    return NeighborPacket(j, z, ctx.agents[j].drift.copy())


def known_dynamics_packet(A, B, t_start, t_end, x_tk, x_t, t, sender=0):
    """Packet of a neighbor rebuilt by a listener that knows the neighbor's ``(A, B)``.

    Uses closed-form Gramians and exponentials instead of the sender's
    propagated grid; algebraically equal to :func:`make_packet` outside the
    deadzone.
    """
    A = matcore.as_matrix(A, "A")
    B = matcore.as_matrix(B, "B")
    x_tk = matcore.as_vector(x_tk)
    T = float(t_end) - float(t_start)
    s = float(t) - float(t_start)
    drift = matcore.expm(A, T) @ x_tk
    if s <= 0.0:
        return NeighborPacket(sender, np.zeros_like(x_tk), drift)
    G = gramian(A, B, T)
    gbar_t = gramian(A, B, s) @ matcore.expm(A.T, T - s)
    dev = matcore.as_vector(x_t) - matcore.expm(A, s) @ x_tk
    return NeighborPacket(sender, G @ matcore.solve(gbar_t, dev), drift)


def closed_form_state(ctx, i, t):
    """Tracked state of ``i`` at ``t`` predicted by the minimum-energy trajectory."""
    ae = ctx.agents[i]
    idx = ctx.index(t)
    G_bar = ae.propagator.gbar_grid[idx] if ctx.lead == 0 else None
    if G_bar is None:
        prop = GramianPropagator(ae.model.A, ae.model.B, ctx.t_start, ctx.t_end,
                                 steps=2 * ctx.steps)
        G_bar = prop.gbar_grid[idx]
    eta = ae.direct_target - ae.drift
    return ae.expA[idx] @ ae.state0 + G_bar @ (ae.G_inv @ eta)
