"""Dense real linear algebra used by every other module.

Matrices are plain ``numpy.ndarray`` objects of dtype float64.  Vectors are
1-D arrays; column vectors are never required.
"""
from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

from .errors import DimensionError, DomainError, SingularMatrixError
from .policy import DEFAULT_POLICY

__all__ = ["as_matrix", "as_vector", "expm", "solve", "condition_1norm", "rank", "ctrb"]


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float array (scalars become 1x1)."""
    m = np.array(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    elif m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2 or m.size == 0:
        raise DimensionError(f"{name}: expected a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DomainError(f"{name}: entries must be finite")
    return m


def as_vector(v, name="vector"):
    x = np.array(v, dtype=float).reshape(-1)
    if x.size == 0:
        raise DimensionError(f"{name}: empty vector")
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{name}: entries must be finite")
    return x


def _square(a, name):
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name}: expected a square matrix, got shape {m.shape}")
    return m


def expm(A, t=1.0):
    """Matrix exponential ``e^{A t}``.

    Scaling and squaring with a degree-13 Pade approximant (the SciPy
    implementation); ``t`` may be negative.
    """
    A = _square(A, "A")
    t = float(t)
    if not np.isfinite(t):
        raise DomainError("t must be finite")
    if t == 0.0:
        return np.eye(A.shape[0])
    with np.errstate(over="ignore", invalid="ignore"):
        out = scipy.linalg.expm(A * t)
    if not np.all(np.isfinite(out)):
        raise DomainError("matrix exponential overflowed")
    return out


def condition_1norm(lu, anorm):
    """One-norm reciprocal-free condition estimate from an LU factorization."""
    rcond, info = lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or rcond == 0.0:
        return np.inf
    return 1.0 / rcond


def solve(A, B, *, cap=None, full_output=False):
    """Solve ``A X = B`` by pivoted LU.

    Parameters
    ----------
    A : (n, n) array_like
    B : (n,) or (n, k) array_like
    cap : float, optional
        Largest acceptable one-norm condition estimate; defaults to the
        package policy (1e12).
    full_output : bool
        If true, return ``(X, condition)`` instead of ``X``.

    Raises
    ------
    SingularMatrixError
        When the condition estimate exceeds ``cap``.
    """
    A = _square(A, "A")
    b = np.array(B, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise DimensionError(f"B has {b.shape[0]} rows, A is {A.shape[0]}x{A.shape[0]}")
    if not np.all(np.isfinite(b)):
        raise DomainError("B: entries must be finite")
    cap = DEFAULT_POLICY.condition_cap if cap is None else cap
    anorm = np.linalg.norm(A, 1)
    if anorm == 0.0:
        raise SingularMatrixError("A is the zero matrix", np.inf)
    with warnings.catch_warnings():
        # an exactly singular factor is reported below through the condition estimate
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    cond = condition_1norm(lu, anorm)
    if not cond <= cap:
        raise SingularMatrixError(f"matrix is numerically singular (cond1 ~ {cond:.3g})", cond)
    X = scipy.linalg.lu_solve((lu, piv), b, check_finite=False)
    if full_output:
        return X, cond
    return X


def rank(A, tol=0.0):
    """Numerical rank: number of singular values above ``tol``.

    ``tol=0`` picks ``max(shape) * eps * sigma_max``.
    """
    A = as_matrix(A, "A")
    if tol < 0:
        raise DomainError("tol must be non-negative")
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    if tol == 0.0:
        tol = max(A.shape) * np.finfo(float).eps * s[0]
    return int(np.sum(s > tol))


def ctrb(A, B):
    """Kalman controllability matrix ``[B, AB, ..., A^{n-1}B]``."""
    A = _square(A, "A")
    B = as_matrix(B, "B")
    if B.shape[0] != A.shape[0]:
        raise DimensionError(f"B has {B.shape[0]} rows, A is {A.shape[0]}x{A.shape[0]}")
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)
