"""Reference computations that share no code path with the package."""
import numpy as np


def expm_taylor(A, t=1.0, terms=40):
    """Scaled Taylor series with repeated squaring."""
    M = np.asarray(A, dtype=float) * t
    norm = np.linalg.norm(M, 1)
    s = max(0, int(np.ceil(np.log2(norm / 0.25))) if norm > 0.25 else 0)
    M = M / 2.0 ** s
    out = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, terms):
        term = term @ M / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def _simpson(f, a, fa, b, fb):
    m = 0.5 * (a + b)
    fm = f(m)
    return m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_simpson(f, a, b, tol=1e-12, max_depth=50):
    """Adaptive Simpson quadrature of a matrix-valued ``f`` with Richardson correction."""
    fa, fb = f(a), f(b)
    m, fm, whole = _simpson(f, a, fa, b, fb)
    stack = [(a, fa, b, fb, m, fm, whole, tol, 0)]
    total = 0.0
    while stack:
        a, fa, b, fb, m, fm, whole, eps, depth = stack.pop()
        lm, flm, left = _simpson(f, a, fa, m, fm)
        rm, frm, right = _simpson(f, m, fm, b, fb)
        delta = left + right - whole
        if depth >= max_depth or np.max(np.abs(delta)) <= 15.0 * eps:
            total = total + left + right + delta / 15.0
        else:
            stack.append((a, fa, m, fm, lm, flm, left, eps / 2.0, depth + 1))
            stack.append((m, fm, b, fb, rm, frm, right, eps / 2.0, depth + 1))
    return total


def gramian_quadrature(A, B, T, tol=1e-12):
    """``int_0^T e^{A s} B B^T e^{A^T s} ds`` by adaptive Simpson."""
    Q = B @ B.T

    def f(s):
        E = expm_taylor(A, s)
        return E @ Q @ E.T

    scale = max(1.0, np.linalg.norm(f(T)))
    return adaptive_simpson(f, 0.0, T, tol * scale)


def di_profile_closed_form(x_start, x_end, T, s):
    """Minimum-energy input of the double integrator at time ``s``, expanded by hand."""
    eta1 = x_end[0] - x_start[0] - T * x_start[1]
    eta2 = x_end[1] - x_start[1]
    c1 = 12.0 / T ** 3 * eta1 - 6.0 / T ** 2 * eta2
    c2 = -6.0 / T ** 2 * eta1 + 4.0 / T * eta2
    return (T - s) * c1 + c2


def kalman_rank_bruteforce(A, B):
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.linalg.matrix_rank(np.hstack(blocks))


def reachable_to_leader(n, edges):
    """Followers with a directed path to node 0, by brute-force DFS over every node."""
    succ = {i: [j for (a, j) in edges if a == i] for i in range(1, n + 1)}
    ok = set()
    for start in range(1, n + 1):
        seen, todo = set(), [start]
        while todo:
            v = todo.pop()
            if v == 0:
                ok.add(start)
                break
            if v in seen:
                continue
            seen.add(v)
            todo.extend(succ[v])
    return ok
