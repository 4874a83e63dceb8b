"""Arrival-time design for saturated double integrators.

Under the minimum-energy law a double integrator's input is affine in time
over an epoch, so ``|u|`` peaks at one of the two epoch ends.  The designer
therefore only needs the endpoint inputs, which it obtains from the same
closed-form law the controller uses.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import matcore
from .agents import WaypointTable
from .controller import steering_input
from .errors import DomainError
from .policy import DEFAULT_POLICY

A_DI = np.array([[0.0, 1.0], [0.0, 0.0]])
B_DI = np.array([[0.0], [1.0]])


def epoch_control_profile(x_start, x_end, T):
    """``(u(0+), u(T))`` of the minimum-energy transfer ``x_start -> x_end`` in time ``T``."""
    T = float(T)
    if not T > 0 or not np.isfinite(T):
        raise DomainError(f"epoch length must be positive and finite, got {T}")
    u0 = steering_input(A_DI, B_DI, T, x_start, x_end, 0.0)
    uT = steering_input(A_DI, B_DI, T, x_start, x_end, T)
    return float(u0[0]), float(uT[0])


def peak_input(x_start, x_end, T):
    return max(abs(u) for u in epoch_control_profile(x_start, x_end, T))


def _endpoint_lines(x_start, x_end):
    # T^2 u(0+) and T^2 u(T) are affine in T; two evaluations pin them down.
    c1 = np.array(epoch_control_profile(x_start, x_end, 1.0))
    c2 = 4.0 * np.array(epoch_control_profile(x_start, x_end, 2.0))
    slope = c2 - c1
    return list(zip(c1 - slope, slope))


def _boundaries(lines, u_max):
    """Positive T where some endpoint input crosses ``+-u_max``."""
    roots = []
    for a, b in lines:
        for sign in (1.0, -1.0):
            # u_max T^2 - sign (a + b T) = 0
            r = np.roots([u_max, -sign * b, -sign * a])
            roots += [float(t.real) for t in r if abs(t.imag) < 1e-12 and t.real > 0]
    return sorted(roots)


def min_time_to(x_start, x_end, u_max, min_epoch=None, tol=1e-6):
    """Shortest epoch length whose minimum-energy transfer keeps ``|u| <= u_max``.

    The answer is bracketed between feasibility boundaries and refined by
    bisection to ``tol`` seconds; the feasible end of the bracket is returned.
    Transfers that need no input return ``min_epoch``.
    """
    u_max = float(u_max)
    if not u_max > 0 or not np.isfinite(u_max):
        raise DomainError(f"u_max must be positive and finite, got {u_max}")
    min_epoch = DEFAULT_POLICY.min_epoch if min_epoch is None else float(min_epoch)
    x_start = matcore.as_vector(x_start, "x_start")
    x_end = matcore.as_vector(x_end, "x_end")
    if x_start.size != 2 or x_end.size != 2:
        raise DomainError("min_time_to works on double-integrator states (position, velocity)")

    def feasible(T):
        return peak_input(x_start, x_end, T) <= u_max

    if feasible(min_epoch):
        return min_epoch
    # Feasibility can only change at the boundaries, so test one point inside
    # every gap between consecutive boundaries and take the first feasible gap.
    cuts = [min_epoch] + [r for r in _boundaries(_endpoint_lines(x_start, x_end), u_max)
                          if r > min_epoch]
    lo = hi = None
    for left, right in zip(cuts, cuts[1:] + [None]):
        if right is None:
            # past the last boundary everything is feasible; double into it
            probe = max(1.0, 2.0 * left)
            while not feasible(probe):
                probe *= 2.0
                if probe > 1e12:
                    raise DomainError("no finite arrival time found")
        else:
            probe = 0.5 * (left + right)
        if feasible(probe):
            lo, hi = left, probe
            break
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


@dataclass
class WaypointPlan:
    """Designed sampling times for a group of double integrators visiting waypoints.

    ``waypoints[l]`` is reached at ``times[l + 1]``; ``times[0] = 0``.
    """

    initial_states: list
    waypoints: list
    u_max: float
    times: np.ndarray

    @property
    def durations(self):
        return np.diff(self.times)

    def leader_table(self):
        """Waypoint leader sampled so that ``waypoints[l]`` is read at ``times[l]``."""
        return WaypointTable(self.times[:-1], self.waypoints)

    def rows(self):
        return [{"k": k + 1, "t": float(self.times[k + 1]), "T": float(d),
                 "position": float(w[0]), "velocity": float(w[1])}
                for k, (d, w) in enumerate(zip(self.durations, self.waypoints))]


def design_plan(initial_states, waypoints, u_max, min_epoch=None, tol=1e-6):
    """Epoch lengths for visiting ``waypoints`` in order without exceeding ``u_max``.

    The first epoch is the slowest follower's minimum time to the first
    waypoint.  Afterwards all followers sit on the same waypoint, so each
    later epoch is a single minimum-time transfer.
    """
    if len(waypoints) == 0:
        raise DomainError("waypoints must be non-empty")
    if len(initial_states) == 0:
        raise DomainError("at least one follower initial state is required")
    wps = [matcore.as_vector(w, "waypoint") for w in waypoints]
    x0 = [matcore.as_vector(x, "initial state") for x in initial_states]
    durations = [max(min_time_to(x, wps[0], u_max, min_epoch, tol) for x in x0)]
    for a, b in zip(wps, wps[1:]):
        durations.append(min_time_to(a, b, u_max, min_epoch, tol))
    times = np.concatenate([[0.0], np.cumsum(durations)])
    return WaypointPlan(x0, wps, float(u_max), times)
