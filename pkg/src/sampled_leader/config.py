"""Scenario files: TOML schema, validation and construction of a :class:`Scenario`.

A scenario file has these tables (matrices are row-major nested arrays)::

    name = "msd"
    tracking = "state"                 # state | output | homogenized

    [[followers]]                      # one per follower, ids 1..N in order
    A = [[0.0, 1.0], [-0.2, -0.1]]     # or: msd = {k = 1.0, b = 0.5, m = 5.0}
    B = [[0.0], [0.2]]
    x0 = [0.0, 0.0]
    C = [[0.0, 1.0]]                   # optional
    u_bounds = [-5.0, 5.0]             # optional

    [leader]                           # kind = waypoints | lti | msd | python
    kind = "msd"
    x0 = [1.0, 0.0]
    input = {kind = "zero"}            # zero | constant | sine | python

    [network]
    edges = [[1, 0], [2, 1]]           # (i, j): i listens to j, j = 0 is the leader

    [formation]
    offsets = {"1" = [0.0, 0.0]}       # F^{i0} per follower; or per_epoch = [{...}, ...]

    [schedule]
    period = 1.0                       # with epochs; or times = [...]; or design = true
    epochs = 10

    [integration]
    steps_per_epoch = 1000
    deadzone_steps = 2
    deadzone_mode = "hold"             # hold | zero
    interval = "deadzone"              # deadzone | delta
    delta_fraction = 0.01

    [[perturbations]]
    epoch = 2
    followers = [3]
    magnitude = 0.1
    seed = 7

    [output]
    dir = "out"
"""
from __future__ import annotations

import copy
import importlib
import importlib.resources
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from . import arrivals
from .agents import (LtiFollower, LtiLeader, NonlinearLeader, SamplingSchedule, WaypointTable,
                     msd_follower, msd_leader)
from .controller import DEADZONE_MODES, homogenize
from .errors import ConfigError, SampledLeaderError
from .policy import DEFAULT_POLICY
from .simulator import Perturbation, Scenario
from .topology import FormationSpec, LeaderNetwork, require_global_sink, resolve_offsets

BUILTIN = ("msd", "waypoints", "aircraft")
TRACKING = ("state", "output", "homogenized")
LEADER_KINDS = ("waypoints", "lti", "msd", "python")
INPUT_KINDS = ("zero", "constant", "sine", "python")


@dataclass
class ScenarioConfig:
    name: str
    followers: list
    leader: dict
    network: dict
    schedule: dict
    tracking: str = "state"
    formation: dict = field(default_factory=dict)
    integration: dict = field(default_factory=dict)
    perturbations: list = field(default_factory=list)
    output: dict = field(default_factory=dict)
    homogenize_target: dict = field(default_factory=dict)
    u_max: float | None = None

    def to_dict(self):
        d = asdict(self)
        return {k: v for k, v in d.items() if v not in (None, {}, [])}


# --------------------------------------------------------------------------
# loading


def builtin_path(name):
    return importlib.resources.files("sampled_leader") / "scenarios" / f"{name}.toml"


def resolve_scenario(name_or_path):
    """Path of a built-in scenario name or of a user file."""
    if name_or_path in BUILTIN:
        return builtin_path(name_or_path)
    return Path(name_or_path)


def parse_config(text, source="<string>"):
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError([f"parse error: {exc}"], source) from None
    return from_dict(raw, source)


def load_config(path):
    """Read and fully validate a scenario file; raises :class:`ConfigError` listing every problem."""
    path = resolve_scenario(str(path))
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read file: {exc.strerror or exc}"], str(path)) from None
    return parse_config(text, str(path))


def dump_config(cfg, path=None):
    text = tomli_w.dumps(_plain(cfg.to_dict()))
    if path is not None:
        Path(path).write_text(text)
    return text


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def from_dict(raw, source="<dict>"):
    problems = []
    known = {"name", "tracking", "followers", "leader", "network", "schedule", "formation",
             "integration", "perturbations", "output", "homogenize_target", "u_max"}
    for key in sorted(set(raw) - known):
        problems.append(f"unknown top-level key {key!r}")
    for key in ("followers", "leader", "network", "schedule"):
        if key not in raw:
            problems.append(f"missing required table {key!r}")
    if problems:
        raise ConfigError(problems, source)
    cfg = ScenarioConfig(
        name=str(raw.get("name", Path(source).stem)),
        followers=copy.deepcopy(raw["followers"]),
        leader=copy.deepcopy(raw["leader"]),
        network=copy.deepcopy(raw["network"]),
        schedule=copy.deepcopy(raw["schedule"]),
        tracking=raw.get("tracking", "state"),
        formation=copy.deepcopy(raw.get("formation", {})),
        integration=copy.deepcopy(raw.get("integration", {})),
        perturbations=copy.deepcopy(raw.get("perturbations", [])),
        output=copy.deepcopy(raw.get("output", {})),
        homogenize_target=copy.deepcopy(raw.get("homogenize_target", {})),
        u_max=raw.get("u_max"),
    )
    problems = validate(cfg)
    if problems:
        raise ConfigError(problems, source)
    return cfg


# --------------------------------------------------------------------------
# construction


def _callable(spec):
    mod, _, attr = str(spec).partition(":")
    if not mod or not attr:
        raise ValueError(f"callable reference {spec!r} must look like 'module:function'")
    return getattr(importlib.import_module(mod), attr)


def _input_function(spec, dim):
    spec = spec or {"kind": "zero"}
    kind = spec.get("kind", "zero")
    if kind == "zero":
        return lambda t: np.zeros(dim)
    if kind == "constant":
        value = np.broadcast_to(np.asarray(spec["value"], dtype=float), (dim,)).copy()
        return lambda t: value
    if kind == "sine":
        amp = float(spec.get("amplitude", 1.0))
        freq = float(spec.get("frequency", 1.0))
        phase = float(spec.get("phase", 0.0))
        bias = float(spec.get("offset", 0.0))
        return lambda t: np.full(dim, bias + amp * np.sin(freq * t + phase))
    if kind == "python":
        return _callable(spec["target"])
    raise ValueError(f"unknown leader input kind {kind!r}; expected one of {INPUT_KINDS}")


def build_followers(cfg):
    out, problems = [], []
    for pos, f in enumerate(cfg.followers, start=1):
        fid = int(f.get("id", pos))
        try:
            if fid != pos:
                raise ValueError(f"ids must be 1..N in order, got {fid} at position {pos}")
            if "msd" in f:
                p = f["msd"]
                fol = msd_follower(fid, p["k"], p["b"], p["m"], f["x0"])
                if "C" in f or "u_bounds" in f:
                    fol = LtiFollower(fid, fol.A, fol.B, fol.x0, C=f.get("C"),
                                      u_bounds=f.get("u_bounds"))
            else:
                fol = LtiFollower(fid, f["A"], f["B"], f["x0"], C=f.get("C"),
                                  u_bounds=f.get("u_bounds"))
            out.append(fol)
        except KeyError as exc:
            problems.append(f"follower {fid}: missing field {exc.args[0]!r}")
        except (SampledLeaderError, ValueError, TypeError) as exc:
            msg = str(exc)
            problems.append(msg if msg.startswith(f"follower {fid}") else f"follower {fid}: {msg}")
    return out, problems


def build_network(cfg, n):
    edges = cfg.network.get("edges")
    if edges is None:
        raise ValueError("network: missing 'edges'")
    net = LeaderNetwork.from_edges(n, edges)
    require_global_sink(net)
    return net


def build_formation(cfg, net, dim):
    form = cfg.formation or {}
    if not form:
        return FormationSpec.zero(dim)
    if "local" in form:
        table = {(int(e["i"]), int(e["j"])): e["offset"] for e in form["local"]}
        return FormationSpec(table, dim=dim)
    if "offsets" in form:
        return FormationSpec(_local_from_absolute(net, form["offsets"], dim), dim=dim)
    if "per_epoch" in form:
        return FormationSpec([_local_from_absolute(net, tab, dim) for tab in form["per_epoch"]],
                             dim=dim)
    raise ValueError("formation: expected 'offsets', 'per_epoch' or 'local'")


def _local_from_absolute(net, offsets, dim):
    F = {int(k): np.asarray(v, dtype=float) for k, v in offsets.items()}
    missing = [i for i in net.followers if i not in F]
    if missing:
        raise ValueError(f"formation: no offset for followers {missing}")
    bad = [i for i, v in F.items() if v.shape != (dim,)]
    if bad:
        raise ValueError(f"formation: offsets of followers {bad} must have length {dim}")
    F[0] = np.zeros(dim)
    return {(i, j): F[i] - F[j] for i, j in net.edges()}


def _waypoint_states(cfg):
    return [np.asarray(s, dtype=float) for s in cfg.leader["states"]]


def build_leader(cfg, times):
    ld = cfg.leader
    kind = ld.get("kind")
    output = ld.get("output")
    if kind == "waypoints":
        states = _waypoint_states(cfg)
        t = ld.get("times")
        if t is None:
            # waypoint l is read at t_l and reached at t_{l+1}
            if len(states) < len(times) - 1:
                raise ValueError(f"leader: {len(states)} waypoints for {len(times) - 1} epochs")
            t = times[:len(states)]
        return WaypointTable(t, states, output=output)
    if kind == "lti":
        B = np.asarray(ld["B"], dtype=float)
        return LtiLeader(ld["A"], B, ld["x0"], _input_function(ld.get("input"), B.shape[1]),
                         output=output)
    if kind == "msd":
        p = {k: float(ld[k]) for k in ("k", "b", "m", "cubic") if k in ld}
        lead = msd_leader(x0=tuple(ld.get("x0", (1.0, 0.0))),
                          u=_input_function(ld.get("input"), 1), **p)
        if output is not None:
            lead.output = np.asarray(output, dtype=float)
        return lead
    if kind == "python":
        return NonlinearLeader(_callable(ld["rhs"]), ld["x0"],
                               _input_function(ld.get("input"), int(ld.get("input_dim", 1))),
                               output=output)
    raise ValueError(f"leader: unknown kind {kind!r}; expected one of {LEADER_KINDS}")


def design_from_config(cfg, followers=None, tol=1e-6):
    """Arrival plan for a ``schedule.design = true`` scenario."""
    if cfg.leader.get("kind") != "waypoints":
        raise ValueError("schedule design needs a waypoint leader")
    if cfg.u_max is None:
        raise ValueError("schedule design needs a top-level u_max")
    if followers is None:
        followers, problems = build_followers(cfg)
        if problems:
            raise ConfigError(problems)
    for f in followers:
        if not (np.allclose(f.A, arrivals.A_DI) and np.allclose(f.B, arrivals.B_DI)):
            raise ValueError(f"follower {f.id}: arrival design needs double-integrator dynamics")
    min_epoch = cfg.schedule.get("min_epoch")
    return arrivals.design_plan([f.x0 for f in followers], _waypoint_states(cfg),
                                cfg.u_max, min_epoch=min_epoch, tol=tol)


def build_schedule(cfg, followers):
    s = cfg.schedule
    if s.get("design"):
        plan = design_from_config(cfg, followers)
        return SamplingSchedule(plan.times), plan
    if "times" in s:
        return SamplingSchedule(s["times"]), None
    if "period" in s and "epochs" in s:
        return SamplingSchedule.uniform(float(s["period"]), int(s["epochs"])), None
    raise ValueError("schedule: expected 'times', 'period' + 'epochs', or 'design = true'")


def validate(cfg):
    """Every problem found in ``cfg``, as strings (empty when valid)."""
    problems = []
    if cfg.tracking not in TRACKING:
        problems.append(f"tracking must be one of {TRACKING}, got {cfg.tracking!r}")
    if not isinstance(cfg.followers, list) or not cfg.followers:
        return problems + ["followers: at least one follower is required"]
    followers, fp = build_followers(cfg)
    problems += fp
    n = len(cfg.followers)
    net = None
    try:
        net = build_network(cfg, n)
    except (SampledLeaderError, ValueError, TypeError) as exc:
        problems.append(f"network: {exc}" if not str(exc).startswith("network") else str(exc))
    integ = cfg.integration
    mode = integ.get("deadzone_mode", "hold")
    if mode not in DEADZONE_MODES:
        problems.append(f"integration: deadzone_mode must be one of {DEADZONE_MODES}")
    if integ.get("interval", "deadzone") not in ("deadzone", "delta"):
        problems.append("integration: interval must be 'deadzone' or 'delta'")
    steps = integ.get("steps_per_epoch", DEFAULT_POLICY.steps_per_epoch)
    if not isinstance(steps, int) or steps < 1:
        problems.append("integration: steps_per_epoch must be a positive integer")
    dz = integ.get("deadzone_steps", DEFAULT_POLICY.deadzone_steps)
    if not isinstance(dz, int) or dz < 0:
        problems.append("integration: deadzone_steps must be a non-negative integer")
    if cfg.u_max is not None and not (isinstance(cfg.u_max, (int, float)) and cfg.u_max > 0):
        problems.append("u_max must be a positive number")
    schedule = None
    if not fp:
        try:
            schedule, _ = build_schedule(cfg, followers)
        except (SampledLeaderError, ValueError, KeyError, TypeError) as exc:
            problems.append(f"schedule: {exc}")
    if followers and not fp:
        dims = {f.n for f in followers}
        if cfg.tracking == "output":
            missing = [f.id for f in followers if f.C is None]
            if missing:
                problems.append(f"tracking 'output' needs C for followers {missing}")
        if cfg.tracking == "homogenized":
            try:
                t = cfg.homogenize_target
                homogenize(followers, (t["A"], t["B"]))
            except KeyError:
                problems.append("homogenize_target needs 'A' and 'B'")
            except SampledLeaderError as exc:
                problems.append(str(exc))
        elif cfg.tracking == "state" and len(dims) > 1:
            problems.append(f"state tracking needs equal follower dimensions, got {sorted(dims)}")
    leader = None
    if schedule is not None:
        try:
            leader = build_leader(cfg, schedule.times)
        except (SampledLeaderError, ValueError, KeyError, TypeError, ImportError,
                AttributeError) as exc:
            problems.append(f"leader: {exc}")
    if net is not None and followers and not fp:
        try:
            dim = _tracked_dim(cfg, followers)
            spec = build_formation(cfg, net, dim)
            epochs = schedule.epochs if schedule is not None else 1
            for k in range(1 if spec.is_constant() else epochs):
                resolve_offsets(net, spec, k)
            if leader is not None and leader.dim != dim:
                problems.append(f"leader: sampled state has dimension {leader.dim}, "
                                f"followers track dimension {dim}")
        except (SampledLeaderError, ValueError, TypeError) as exc:
            problems.append(f"formation: {exc}")
    for p in cfg.perturbations:
        try:
            Perturbation(int(p["epoch"]), [int(i) for i in p["followers"]], float(p["magnitude"]),
                         int(p.get("seed", 0)))
            bad = [i for i in p["followers"] if not 1 <= int(i) <= n]
            if bad:
                problems.append(f"perturbation: unknown followers {bad}")
            if schedule is not None and not 0 <= int(p["epoch"]) < schedule.epochs:
                problems.append(f"perturbation: epoch {p['epoch']} outside 0..{schedule.epochs - 1}")
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"perturbation: bad entry {p!r} ({exc})")
    return problems


def _tracked_dim(cfg, followers):
    if cfg.tracking == "output":
        return followers[0].C.shape[0]
    return followers[0].n


def build_scenario(cfg, *, steps=None, deadzone=None, seed=None):
    """Turn a validated config into a runnable :class:`Scenario`.

    Returns ``(scenario, plan)``; ``plan`` is the arrival design when the
    schedule was designed, else ``None``.  ``seed`` overrides the seeds of
    all perturbations.
    """
    followers, problems = build_followers(cfg)
    if problems:
        raise ConfigError(problems)
    net = build_network(cfg, len(followers))
    schedule, plan = build_schedule(cfg, followers)
    leader = build_leader(cfg, schedule.times)
    integ = cfg.integration
    interval = integ.get("interval", "deadzone")
    delta = integ.get("delta_fraction", DEFAULT_POLICY.delta_fraction) if interval == "delta" else None
    target = None
    if cfg.tracking == "homogenized":
        target = (cfg.homogenize_target["A"], cfg.homogenize_target["B"])
    perturbations = [Perturbation(int(p["epoch"]), [int(i) for i in p["followers"]],
                                  float(p["magnitude"]),
                                  int(seed if seed is not None else p.get("seed", 0)))
                     for p in cfg.perturbations]
    sc = Scenario(
        name=cfg.name, followers=followers, leader=leader, network=net, schedule=schedule,
        formation=build_formation(cfg, net, _tracked_dim(cfg, followers)),
        tracking=cfg.tracking, homogenize_target=target,
        steps_per_epoch=int(steps or integ.get("steps_per_epoch", DEFAULT_POLICY.steps_per_epoch)),
        deadzone_steps=int(deadzone if deadzone is not None
                           else integ.get("deadzone_steps", DEFAULT_POLICY.deadzone_steps)),
        deadzone_mode=integ.get("deadzone_mode", "hold"),
        delta_fraction=delta, perturbations=perturbations, u_max=cfg.u_max,
        homogeneous=_homogeneous(followers, cfg.tracking),
    )
    return sc, plan


def _homogeneous(followers, tracking):
    if tracking == "homogenized":
        return True
    f0 = followers[0]
    return all(f.A.shape == f0.A.shape and f.B.shape == f0.B.shape and np.array_equal(f.A, f0.A)
               and np.array_equal(f.B, f0.B) for f in followers) and tracking == "state"
