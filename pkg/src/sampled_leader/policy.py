"""Numeric tolerances used across the package, kept in one place."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class NumericPolicy:
    # matcore
    expm_rtol: float = 1e-10
    solve_rtol: float = 1e-9
    condition_cap: float = 1e12
    # integration
    steps_per_epoch: int = 1000
    deadzone_steps: int = 2
    delta_fraction: float = 0.01
    grid_atol: float = 1e-9
    # topology
    offset_atol: float = 1e-12
    # arrivals
    time_atol: float = 1e-6
    min_epoch: float = 1e-3
    # invariant checks (relative to 1 + |x0(t_k)|)
    arrival_tol: float = 1e-4
    energy_tol: float = 1e-4
    sync_tol: float = 1e-5
    saturation_slack: float = 1e-3


DEFAULT_POLICY = NumericPolicy()
