import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import expm_taylor, gramian_quadrature, kalman_rank_bruteforce
from sampled_leader import matcore
from sampled_leader.errors import ControllabilityError, DomainError, SingularMatrixError
from sampled_leader.gramian import (GramianPropagator, assert_controllable, gbar, gramian,
                                    min_energy, pmatrix, propagate)

from conftest import A_AIR, A_DI, B_AIR, B_DI, random_controllable


def di_gramian(T):
    return np.array([[T ** 3 / 3, T ** 2 / 2], [T ** 2 / 2, T]])


def test_zero_dynamics_identity_input():
    np.testing.assert_allclose(gramian(np.zeros((3, 3)), np.eye(3), 2.5), 2.5 * np.eye(3),
                               rtol=1e-14)


@pytest.mark.parametrize("T", [0.1, 1.0, 3.0, 17.0])
def test_double_integrator_closed_form(T):
    np.testing.assert_allclose(gramian(A_DI, B_DI, T), di_gramian(T), rtol=1e-12)


def test_short_window_vanishes():
    norms = [np.linalg.norm(gramian(A_AIR, B_AIR, T)) for T in (1e-2, 1e-4, 1e-6)]
    assert norms[0] > norms[1] > norms[2]
    assert norms[2] <= 1.01e-6 * np.linalg.norm(B_AIR) ** 2
    assert np.min(np.linalg.eigvalsh(gramian(A_AIR, B_AIR, 1e-6))) < 1e-15


def test_gramian_errors():
    with pytest.raises(ControllabilityError):
        gramian(np.eye(2), [[1.0], [0.0]], 1.0)
    with pytest.raises(DomainError):
        gramian(A_DI, B_DI, 0.0)
    with pytest.raises(DomainError):
        gramian(A_DI, B_DI, -1.0)


def test_gramian_matches_quadrature_oracle():
    rng = np.random.default_rng(11)
    for _ in range(5):
        A, B = random_controllable(rng, 3, 1)
        G = gramian(A, B, 1.7)
        ref = gramian_quadrature(A, B, 1.7)
        assert np.linalg.norm(G - ref) <= 1e-8 * np.linalg.norm(ref)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(2, 5), m=st.integers(1, 2),
       T1=st.floats(0.05, 3.0), dT=st.floats(0.01, 3.0))
def test_symmetry_and_monotonicity(seed, n, m, T1, dT):
    A, B = random_controllable(np.random.default_rng(seed), n, m)
    G1 = gramian(A, B, T1)
    G2 = gramian(A, B, T1 + dT)
    assert np.linalg.norm(G1 - G1.T) <= 1e-10 * np.linalg.norm(G1)
    assert np.min(np.linalg.eigvalsh(G2 - G1)) >= -1e-10 * max(1.0, np.linalg.norm(G2))


def test_propagate_endpoints():
    p = GramianPropagator(A_AIR, B_AIR, 2.0, 3.0, steps=500)
    W0, Phi0 = propagate(p, 2.0)
    np.testing.assert_array_equal(W0, np.zeros((2, 2)))
    np.testing.assert_allclose(Phi0, expm_taylor(A_AIR.T, 1.0), rtol=1e-12)
    W1, Phi1 = propagate(p, 3.0)
    ref = gramian(A_AIR, B_AIR, 1.0)
    assert np.linalg.norm(W1 - ref) <= 1e-8 * np.linalg.norm(ref)
    np.testing.assert_allclose(Phi1, np.eye(2), atol=1e-9)


def test_propagate_double_integrator_midpoint():
    p = GramianPropagator(A_DI, B_DI, 0.0, 1.0, steps=1000)
    W, Phi = propagate(p, 0.5)
    np.testing.assert_allclose(W, [[1 / 24, 1 / 8], [1 / 8, 1 / 2]], rtol=1e-12)
    np.testing.assert_allclose(Phi, [[1.0, 0.0], [0.5, 1.0]], atol=1e-13)


def test_propagate_rejects_off_grid_and_outside():
    p = GramianPropagator(A_DI, B_DI, 0.0, 1.0, steps=10)
    with pytest.raises(DomainError):
        propagate(p, 0.05)
    with pytest.raises(DomainError):
        propagate(p, 1.1)
    with pytest.raises(DomainError):
        propagate(p, -0.1)
    with pytest.raises(DomainError):
        GramianPropagator(A_DI, B_DI, 1.0, 1.0)


def test_propagate_matches_gramian_on_grid():
    rng = np.random.default_rng(5)
    for _ in range(4):
        A, B = random_controllable(rng, 3, 2)
        p = GramianPropagator(A, B, 0.0, 2.0, steps=1000)
        for i in range(100, 1001, 100):
            t = i * p.step
            W, Phi = propagate(p, t)
            G = gramian(A, B, t)
            assert np.linalg.norm(W - G) <= 1e-8 * np.linalg.norm(G)
            E = matcore.expm(A.T, 2.0 - t)
            assert np.linalg.norm(Phi - E) <= 1e-8 * np.linalg.norm(E)


def test_w_positive_definite_inside_epoch():
    p = GramianPropagator(A_AIR, B_AIR, 0.0, 0.1, steps=200)
    assert np.all(np.linalg.eigvalsh(p.W[1:]) > 0)
    assert np.all(np.linalg.eigvalsh(p.W) > -1e-18)


def test_gbar_endpoints_and_factorization():
    p = GramianPropagator(A_DI, B_DI, 0.0, 1.0, steps=1000)
    np.testing.assert_array_equal(gbar(p, 0.0), np.zeros((2, 2)))
    np.testing.assert_allclose(gbar(p, 1.0), di_gramian(1.0), rtol=1e-10)
    ref = np.array([[1 / 24, 1 / 8], [1 / 8, 1 / 2]]) @ expm_taylor(A_DI.T, 0.5)
    np.testing.assert_allclose(gbar(p, 0.5), ref, rtol=1e-12)
    rng = np.random.default_rng(8)
    A, B = random_controllable(rng, 4, 1)
    q = GramianPropagator(A, B, 1.0, 2.5, steps=300)
    for i in (1, 30, 150, 299):
        t = 1.0 + i * q.step
        ref = gramian(A, B, t - 1.0) @ matcore.expm(A.T, 2.5 - t)
        assert np.linalg.norm(gbar(q, t) - ref) <= 1e-8 * np.linalg.norm(ref)


def test_pmatrix_examples():
    p = GramianPropagator(A_DI, B_DI, 0.0, 1.0, steps=1000)
    np.testing.assert_array_equal(pmatrix(p, 0.0), np.zeros((2, 2)))
    np.testing.assert_allclose(pmatrix(p, 1.0), [[12.0, -6.0], [-6.0, 4.0]], rtol=1e-9)
    np.testing.assert_allclose(pmatrix(p, 0.5) @ gbar(p, 0.5), np.eye(2), atol=1e-10)


def test_pmatrix_singular_near_start():
    # first step of 1e-6 s: gbar(t) has condition number far above the cap
    tiny = GramianPropagator(A_DI, B_DI, 0.0, 1e-3, steps=1000)
    with pytest.raises(SingularMatrixError):
        pmatrix(tiny, tiny.step)
    assert not tiny.pmatrix_ok(1)


def test_lead_window_starts_from_short_gramian():
    p = GramianPropagator(A_DI, B_DI, 0.0, 1.0, steps=1000, lead=0.01)
    W, _ = propagate(p, 0.0)
    np.testing.assert_allclose(W, di_gramian(0.01), rtol=1e-12)
    np.testing.assert_allclose(propagate(p, 1.0)[0], di_gramian(1.01), rtol=1e-9)
    assert np.all(np.isfinite(pmatrix(p, 0.0)))


def test_min_energy_examples():
    x = np.array([0.3, -1.2])
    assert min_energy(A_DI, B_DI, 2.0, x, matcore.expm(A_DI, 2.0) @ x) == pytest.approx(0.0, abs=1e-20)
    assert min_energy(A_DI, B_DI, 1.0, [0, 0], [1, 0]) == pytest.approx(12.0, rel=1e-12)
    assert min_energy(A_DI, B_DI, 2.0, [0, 0], [1, 0]) == pytest.approx(1.5, rel=1e-12)


def test_assert_controllable_examples():
    assert assert_controllable(A_DI, B_DI)
    assert not assert_controllable(np.eye(2), [[1.0], [0.0]])
    assert assert_controllable(A_AIR, B_AIR)
    assert kalman_rank_bruteforce(A_AIR, B_AIR) == 2


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(1, 5), m=st.integers(1, 3))
def test_controllability_matches_bruteforce(seed, n, m):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    B = rng.standard_normal((n, m))
    if rng.random() < 0.5:
        B[:, :] = 0.0
        B[0, 0] = 1.0
        A[1:, 0] = 0.0 if n > 1 else A[1:, 0]
        A[1:, :1] = 0.0
    assert assert_controllable(A, B) == (kalman_rank_bruteforce(A, B) == n)


def test_optimality_against_zero_to_zero_perturbations():
    rng = np.random.default_rng(21)
    A = np.array([[0.0, 1.0], [-2.0, -0.3]])
    B = np.array([[0.0], [1.0]])
    T, N = 1.5, 1500
    x0, x1 = np.array([1.0, 0.0]), np.array([-0.5, 0.8])
    tau = np.linspace(0.0, T, N + 1)
    c = np.full(N + 1, T / N)
    c[0] = c[-1] = T / (2 * N)
    Phi = np.stack([matcore.expm(A, T - s) @ B for s in tau])      # (N+1, n, m)
    M = (c[:, None, None] * Phi).transpose(1, 0, 2).reshape(2, -1)  # discrete reach map
    G = gramian(A, B, T)
    eta = x1 - matcore.expm(A, T) @ x0
    u = np.einsum("sji,j->si", Phi, np.linalg.solve(G, eta)).reshape(-1)
    best = min_energy(A, B, T, x0, x1)
    for _ in range(50):
        r = rng.standard_normal(u.size) * rng.uniform(0.01, 2.0)
        w = r - M.T @ np.linalg.solve(M @ M.T, M @ r)
        v = u + w
        np.testing.assert_allclose(M @ v, M @ u, atol=1e-10)
        energy = float(np.sum(c * np.sum(v.reshape(N + 1, -1) ** 2, axis=1)))
        assert best <= energy
