"""Controllability Gramians and the per-epoch gain matrices built on them.

For one agent and one epoch ``[t_k, t_{k+1}]`` of length ``T``:

* ``gramian(A, B, T)`` is the finite-horizon controllability Gramian
  ``G(T) = int_0^T e^{A s} B B^T e^{A^T s} ds``;
* ``W(t) = G(t - t_k)`` and ``Phi(t) = e^{A^T (t_{k+1} - t)}`` are propagated
  together by fixed-step RK4 on a uniform grid (:class:`GramianPropagator`);
* ``gbar(t) = W(t) Phi(t)`` and ``pmatrix(t) = gbar(t)^{-1}`` (zero at t_k).
"""
from __future__ import annotations

import functools

import numpy as np

from . import matcore
from .errors import ControllabilityError, DimensionError, DomainError, SingularMatrixError
from .policy import DEFAULT_POLICY


def _pair(A, B):
    A = matcore.as_matrix(A, "A")
    B = matcore.as_matrix(B, "B")
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"A must be square, got {A.shape}")
    if B.shape[0] != A.shape[0]:
        raise DimensionError(f"B has {B.shape[0]} rows, A is {A.shape[0]}x{A.shape[0]}")
    return A, B


def assert_controllable(A, B):
    """True iff the Kalman matrix of ``(A, B)`` has full row rank."""
    A, B = _pair(A, B)
    return matcore.rank(matcore.ctrb(A, B)) == A.shape[0]


def require_controllable(A, B, who="(A, B)"):
    if not assert_controllable(A, B):
        raise ControllabilityError(f"{who}: pair is not controllable")


def gramian(A, B, T, *, check=True):
    """Controllability Gramian over a window of length ``T``.

    Evaluated with Van Loan's block exponential
    ``expm([[-A, BB^T], [0, A^T]] T) = [[., F12], [0, F22]]``, ``G = F22^T F12``.
    """
    A, B = _pair(A, B)
    T = float(T)
    if not T > 0:
        raise DomainError(f"window length must be positive, got {T}")
    if check:
        require_controllable(A, B)
    n = A.shape[0]
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = -A
    M[:n, n:] = B @ B.T
    M[n:, n:] = A.T
    F = matcore.expm(M, T)
    G = F[n:, n:].T @ F[:n, n:]
    return 0.5 * (G + G.T)


def min_energy(A, B, T, x_start, x_target):
    """Minimum of ``int u^T u`` steering ``x_start`` to ``x_target`` in time ``T``."""
    A, B = _pair(A, B)
    eta = matcore.as_vector(x_target) - matcore.expm(A, T) @ matcore.as_vector(x_start)
    return float(eta @ matcore.solve(gramian(A, B, T), eta))


def _rk4_maps(L, h):
    """Exact one-step maps of classical RK4 on ``y' = L y + q``: ``y+ = R y + S q``."""
    n = L.shape[0]
    Z = h * L
    I = np.eye(n)
    Z2 = Z @ Z
    Z3 = Z2 @ Z
    R = I + Z + Z2 / 2 + Z3 / 6 + Z3 @ Z / 24
    S = h * (I + Z / 2 + Z2 / 6 + Z3 / 24)
    return R, S


def _rk4_grid(A, Q, T, steps, W0):
    # RK4 on a linear ODE is a fixed affine map per step, so the stages are
    # folded into R and S once instead of being re-evaluated every step.
    h = T / steps
    n = A.shape[0]
    I = np.eye(n)
    Lw = np.kron(A, I) + np.kron(I, A)       # vec(A W + W A^T), row-major vec
    Rw, Sw = _rk4_maps(Lw, h)
    cw = Sw @ Q.reshape(-1)
    Rp, _ = _rk4_maps(-A.T, h)
    W = np.empty((steps + 1, n, n))
    Phi = np.empty((steps + 1, n, n))
    w = W0.reshape(-1).copy()
    p = matcore.expm(A.T, T)
    W[0], Phi[0] = W0, p
    for i in range(steps):
        w = Rw @ w + cw
        p = Rp @ p
        W[i + 1] = w.reshape(n, n)
        Phi[i + 1] = p
    W = 0.5 * (W + np.swapaxes(W, 1, 2))
    return W, Phi


@functools.lru_cache(maxsize=256)
def _cached_grid(a_bytes, b_bytes, shape_a, shape_b, T, steps, lead):
    A = np.frombuffer(a_bytes).reshape(shape_a)
    B = np.frombuffer(b_bytes).reshape(shape_b)
    n = A.shape[0]
    W0 = gramian(A, B, lead, check=False) if lead > 0 else np.zeros((n, n))
    W, Phi = _rk4_grid(A, B @ B.T, T, steps, W0)
    Gbar = W @ Phi
    P = np.zeros_like(Gbar)
    cond = np.full(steps + 1, np.inf)
    start = 0 if lead > 0 else 1
    cond[start:] = np.linalg.cond(Gbar[start:], 1)
    ok = cond <= DEFAULT_POLICY.condition_cap
    ok[0] = True
    good = np.flatnonzero(ok[start:]) + start
    if good.size:
        P[good] = np.linalg.inv(Gbar[good])
    for arr in (W, Phi, Gbar, P, cond, ok):
        arr.setflags(write=False)
    return W, Phi, Gbar, P, cond, ok


class GramianPropagator:
    """Fixed-step RK4 propagation of ``W`` and ``Phi`` across one epoch.

    Parameters
    ----------
    A, B : array_like
        Agent dynamics.
    t_start, t_end : float
        Epoch bounds ``t_k < t_{k+1}``.
    steps : int
        Number of uniform RK4 steps; queries must fall on this grid.
    lead : float
        Optional window extension ``delta``: ``W`` is started from
        ``G(delta)`` so the window is ``(t_k - delta, t_{k+1}]``.  Zero gives
        the exact mixed Gramian.
    """

    def __init__(self, A, B, t_start, t_end, steps=None, lead=0.0):
        self.A, self.B = _pair(A, B)
        self.t_start = float(t_start)
        self.t_end = float(t_end)
        if not self.t_end > self.t_start:
            raise DomainError(f"epoch must have positive length, got [{t_start}, {t_end}]")
        self.steps = int(steps or DEFAULT_POLICY.steps_per_epoch)
        if self.steps < 1:
            raise DomainError("steps must be >= 1")
        self.lead = float(lead)
        if self.lead < 0:
            raise DomainError("lead must be non-negative")
        self._grid = None

    @property
    def T(self):
        return self.t_end - self.t_start

    @property
    def step(self):
        return self.T / self.steps

    def _data(self):
        if self._grid is None:
            A = np.ascontiguousarray(self.A)
            B = np.ascontiguousarray(self.B)
            self._grid = _cached_grid(A.tobytes(), B.tobytes(), A.shape, B.shape,
                                      self.T, self.steps, self.lead)
        return self._grid

    def index(self, t):
        """Grid index of time ``t``; raises unless ``t`` is a grid point of the epoch."""
        s = (float(t) - self.t_start) / self.step
        i = int(round(s))
        tol = DEFAULT_POLICY.grid_atol * max(1.0, self.T) / self.step
        if abs(s - i) > tol or i < 0 or i > self.steps:
            raise DomainError(f"t={t} is not a grid point of [{self.t_start}, {self.t_end}] "
                              f"with {self.steps} steps")
        return i

    @property
    def W(self):
        return self._data()[0]

    @property
    def Phi(self):
        return self._data()[1]

    @property
    def gbar_grid(self):
        return self._data()[2]

    @property
    def pmatrix_grid(self):
        """``P`` on every grid point; rows whose condition exceeded the cap are zero."""
        return self._data()[3]

    @property
    def condition_grid(self):
        return self._data()[4]

    def pmatrix_ok(self, i):
        return bool(self._data()[5][i])


def propagate(prop, t):
    """``(W(t), Phi(t))`` at grid time ``t``."""
    i = prop.index(t)
    return prop.W[i].copy(), prop.Phi[i].copy()


def gbar(prop, t):
    return prop.gbar_grid[prop.index(t)].copy()


def pmatrix(prop, t):
    """Inverse of ``gbar(t)``; exactly zero at ``t = t_k``.

    Raises :class:`SingularMatrixError` if ``gbar(t)`` is too ill-conditioned,
    which happens only a few steps after ``t_k``.
    """
    i = prop.index(t)
    if i == 0 and prop.lead == 0:
        return np.zeros_like(prop.A)
    n = prop.A.shape[0]
    try:
        return matcore.solve(prop.gbar_grid[i], np.eye(n))
    except SingularMatrixError as exc:
        raise SingularMatrixError(f"gbar({t}) is numerically singular (cond1 ~ {exc.condition:.3g})",
                                  exc.condition) from None
