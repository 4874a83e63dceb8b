"""Follower and leader models and the sampling schedule.

Followers are controllable LTI systems.  The leader is an exogenous signal:
a waypoint table, an LTI system with a known input, or an arbitrary
right-hand side.  The simulator holds the leader object; followers only ever
see the values returned by :func:`sample_leader`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import matcore
from .errors import ControllabilityError, DimensionError, DomainError, ScheduleError
from .gramian import assert_controllable

__all__ = [
    "LtiFollower", "WaypointTable", "LtiLeader", "NonlinearLeader", "SamplingSchedule",
    "sample_leader", "advance_leader", "rk4_step", "msd_follower", "msd_leader", "zero_input",
]


def rk4_step(f, t, x, h):
    """One classical Runge-Kutta step of ``x' = f(t, x)``."""
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def zero_input(dim=1):
    def u(t):
        return np.zeros(dim)
    return u


@dataclass
class LtiFollower:
    """``x' = A x + B u`` with optional output ``y = C x`` and input bounds."""

    id: int
    A: np.ndarray
    B: np.ndarray
    x0: np.ndarray
    C: np.ndarray | None = None
    u_bounds: Sequence | None = None

    def __post_init__(self):
        self.A = matcore.as_matrix(self.A, f"follower {self.id} A")
        self.B = matcore.as_matrix(self.B, f"follower {self.id} B")
        self.x0 = matcore.as_vector(self.x0, f"follower {self.id} x0")
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape[0] != n or self.x0.size != n:
            raise DimensionError(f"follower {self.id}: inconsistent shapes A{self.A.shape}, "
                                 f"B{self.B.shape}, x0({self.x0.size},)")
        if self.C is not None:
            self.C = matcore.as_matrix(self.C, f"follower {self.id} C")
            if self.C.shape[1] != n:
                raise DimensionError(f"follower {self.id}: C has {self.C.shape[1]} columns, n={n}")
        if self.u_bounds is not None:
            lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (self.m,)).copy()
                      for b in self.u_bounds)
            if np.any(lo > hi):
                raise DomainError(f"follower {self.id}: u_min > u_max")
            self.u_bounds = (lo, hi)
        if not assert_controllable(self.A, self.B):
            raise ControllabilityError(f"follower {self.id}: (A,B) uncontrollable")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def rhs(self, x, u):
        return self.A @ x + self.B @ u


def msd_follower(i, k, b, m, x0):
    """Linear mass-spring-damper with spring ``k``, damping ``b`` and mass ``m``."""
    A = [[0.0, 1.0], [-k / m, -b / m]]
    B = [[0.0], [1.0 / m]]
    return LtiFollower(i, A, B, x0)


@dataclass
class SamplingSchedule:
    """Strictly increasing sampling instants ``t_0 = 0 < t_1 < ... < t_M``."""

    times: Sequence[float]

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).reshape(-1)
        if t.size == 0:
            raise ScheduleError("schedule needs at least t_0")
        if t[0] != 0.0:
            raise ScheduleError(f"schedule must start at t_0 = 0, got {t[0]}")
        if np.any(np.diff(t) <= 0):
            raise ScheduleError("sampling times must be strictly increasing")
        if not np.all(np.isfinite(t)):
            raise ScheduleError("sampling times must be finite")
        self.times = t

    @classmethod
    def uniform(cls, period, epochs):
        return cls(np.arange(epochs + 1) * float(period))

    @classmethod
    def from_durations(cls, durations):
        return cls(np.concatenate([[0.0], np.cumsum(durations)]))

    @property
    def epochs(self):
        return len(self.times) - 1

    def period(self, k):
        return float(self.times[k + 1] - self.times[k])


class WaypointTable:
    """Leader given as a table of ``(t_k, x^0_k)`` samples."""

    def __init__(self, times, states, output=None):
        self.times = np.asarray(times, dtype=float).reshape(-1)
        self.states = [matcore.as_vector(s, "waypoint") for s in states]
        if len(self.states) != self.times.size:
            raise ScheduleError("waypoint table needs one state per time")
        self.output = None if output is None else matcore.as_matrix(output, "leader output")

    @property
    def dim(self):
        if self.output is not None:
            return self.output.shape[0]
        return self.states[0].size

    def _lookup(self, t):
        hits = np.flatnonzero(np.abs(self.times - t) <= 1e-9 * max(1.0, abs(t)))
        if hits.size == 0:
            raise ScheduleError(f"waypoint table has no sample at t={t}")
        return self.states[int(hits[0])]

    def reset(self):
        pass


class _DynamicLeader:
    def __init__(self, x0, u=None, output=None):
        self.x0 = matcore.as_vector(x0, "leader x0")
        self.u = u
        self.output = None if output is None else matcore.as_matrix(output, "leader output")
        self.reset()

    def reset(self):
        self.time = 0.0
        self.state = self.x0.copy()

    @property
    def dim(self):
        if self.output is not None:
            return self.output.shape[0]
        return self.x0.size

    def rhs(self, t, x):
        raise NotImplementedError


class LtiLeader(_DynamicLeader):
    """``x0' = A0 x0 + B0 u0(t)``."""

    def __init__(self, A, B, x0, u=None, output=None):
        self.A = matcore.as_matrix(A, "leader A")
        self.B = matcore.as_matrix(B, "leader B")
        super().__init__(x0, u if u is not None else zero_input(self.B.shape[1]), output)

    def rhs(self, t, x):
        return self.A @ x + self.B @ np.atleast_1d(self.u(t))


class NonlinearLeader(_DynamicLeader):
    """``x0' = f(x0, u0(t), t)`` for a user-supplied ``f``."""

    def __init__(self, f, x0, u=None, output=None):
        self.f = f
        super().__init__(x0, u if u is not None else zero_input(1), output)

    def rhs(self, t, x):
        return np.asarray(self.f(x, self.u(t), t), dtype=float)


def msd_leader(k=1.2, b=2.0, m=5.0, cubic=0.6, x0=(1.0, 0.0), u=None):
    """Mass-spring-damper leader with a hardening cubic spring ``cubic * x^3``."""

    def f(x, u0, t):
        u0 = float(np.atleast_1d(u0)[0])
        return np.array([x[1], (u0 - b * x[1] - k * x[0] - cubic * x[0] ** 3) / m])

    return NonlinearLeader(f, x0, u)


def sample_leader(sig, t_k):
    """The leader's (output) state at sampling time ``t_k``.

    Dynamic leaders must already have been advanced to ``t_k``.
    """
    if isinstance(sig, WaypointTable):
        x = sig._lookup(float(t_k))
    else:
        if abs(sig.time - t_k) > 1e-9 * max(1.0, abs(t_k)):
            raise ScheduleError(f"leader is at t={sig.time}, cannot sample t={t_k}")
        x = sig.state
    if sig.output is not None:
        return sig.output @ x
    return x.copy()


def advance_leader(sig, t_from, t_to, steps=1000):
    """Integrate a dynamic leader from ``t_from`` to ``t_to`` with ``steps`` RK4 steps."""
    if not t_to > t_from:
        raise DomainError("advance_leader needs t_to > t_from")
    if isinstance(sig, WaypointTable):
        return None
    if abs(sig.time - t_from) > 1e-9 * max(1.0, abs(t_from)):
        raise ScheduleError(f"leader is at t={sig.time}, not t={t_from}")
    h = (t_to - t_from) / steps
    x = sig.state
    for s in range(steps):
        x = rk4_step(sig.rhs, t_from + s * h, x, h)
    if not np.all(np.isfinite(x)):
        raise DomainError("leader state diverged")
    sig.state = x
    sig.time = float(t_to)
    return x.copy()
