import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from parallel_cs.signals import LevelPartition, draw_sparse
from parallel_cs.solver import (
    BpConfig,
    DenseOperator,
    SolverError,
    power_norm,
    project_ball,
    recovery_error,
    reference_solve,
    soft_threshold,
    solve_bp,
    solve_bp_batch,
)

from conftest import crandn


def gaussian_instance(seed, m=40, N=80, s=5):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, N)) / np.sqrt(m)
    x = draw_sparse(N, s, seed=seed).x
    return A, x


def test_soft_threshold_complex():
    v = np.array([3 + 4j, 0.5j, -2.0, 0])
    out = soft_threshold(v, 1.0)
    assert np.allclose(out, [(3 + 4j) * 4 / 5, 0, -1.0, 0])
    assert out[1] == 0 and out[3] == 0
    assert soft_threshold(np.array([1.0 + 0j]), 1.0)[0] == 0


def test_project_ball():
    c = np.array([1.0, 1.0])
    assert np.allclose(project_ball(np.array([4.0, 5.0]), c, 1.0), [1.6, 1.8])
    assert np.allclose(project_ball(np.array([1.2, 1.0]), c, 1.0), [1.2, 1.0])


def test_identity_operator():
    x = crandn(np.random.default_rng(0), 12)
    res = solve_bp(np.eye(12), x)
    assert res.converged and np.allclose(res.x, x, atol=1e-8)
    ref = reference_solve(np.eye(12), x)
    assert np.allclose(ref.x, x, atol=1e-7)


def test_forced_minimizer():
    res = solve_bp(np.array([[2.0, 1.0]]), np.array([2.0]))
    assert res.converged
    assert np.allclose(res.x, [1, 0], atol=1e-7)
    assert res.objective == pytest.approx(1.0, abs=1e-7)


def test_zero_measurements():
    res = solve_bp(np.ones((3, 5)), np.zeros(3))
    assert res.converged and np.all(res.x == 0)


def test_gaussian_recovery_rate():
    ok = 0
    for k in range(100):
        A, x = gaussian_instance(k)
        res = solve_bp(A, A @ x)
        ok += np.linalg.norm(res.x - x) <= 1e-5 * np.linalg.norm(x)
    assert ok >= 95


def test_batch_matches_single():
    As, Ys = [], []
    for k in range(6):
        A, x = gaussian_instance(k, 20, 40, 3)
        As.append(A)
        Ys.append(A @ x)
    batch = solve_bp_batch(np.array(As), np.array(Ys))
    for k in range(6):
        single = solve_bp(As[k], Ys[k])
        assert np.array_equal(single.x, batch[k].x)
        assert single.iterations == batch[k].iterations


@pytest.mark.parametrize("eta", [0.0, 0.05, 0.3])
def test_against_reference(eta):
    rng = np.random.default_rng(7)
    for k in range(4):
        A, x = gaussian_instance(100 + k, 24, 48, 4)
        A = A + 1j * rng.standard_normal(A.shape) / np.sqrt(24)
        e = crandn(rng, 24)
        y = A @ x + 0.8 * eta * e / np.linalg.norm(e)
        res = solve_bp(A, y, BpConfig(eta=eta))
        ref = reference_solve(A, y, eta)
        assert res.converged
        assert res.objective == pytest.approx(ref.objective, abs=1e-5)
        assert res.residual <= eta + 1e-8 * np.linalg.norm(y) + 1e-12
        assert res.objective <= np.abs(x).sum() + 1e-6


def test_rank_deficient_fourier_rows():
    # repeated frequencies make A rank deficient; y is still in its range
    rng = np.random.default_rng(11)
    N, m = 32, 24
    freqs = rng.integers(0, 8, m)
    A = np.exp(-2j * np.pi * np.outer(freqs, np.arange(N)) / N) / np.sqrt(m)
    A = A * rng.uniform(0.5, 1.5, N)
    assert np.linalg.matrix_rank(A) < m
    x = draw_sparse(N, 3, seed=4).x
    y = A @ x
    res = solve_bp(A, y)
    ref = reference_solve(A, y)
    assert res.converged
    assert res.objective == pytest.approx(ref.objective, abs=1e-5)


def test_pdhg_agrees():
    A, x = gaussian_instance(3, 30, 60, 4)
    a = solve_bp(A, A @ x, BpConfig(method="pdhg", max_iterations=50_000))
    b = solve_bp(A, A @ x)
    assert a.converged
    assert a.objective == pytest.approx(b.objective, abs=1e-5)


def test_power_norm():
    A = np.random.default_rng(1).standard_normal((10, 20))
    est = power_norm(DenseOperator(A), iterations=200, rtol=1e-10)
    assert est == pytest.approx(np.linalg.norm(A, 2), rel=1e-6)


def test_admm_needs_dense():
    class Free:
        N = 4
        matrix = None
    with pytest.raises(SolverError):
        solve_bp(Free(), np.zeros(2))


def test_non_convergence_flag():
    A, x = gaussian_instance(5)
    res = solve_bp(A, A @ x, BpConfig(max_iterations=5))
    assert not res.converged and res.iterations <= 5


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100), st.sampled_from([0.0, 0.1]))
def test_scale_covariance(seed, c, eta):
    A, x = gaussian_instance(seed, 16, 32, 3)
    y = A @ x
    a = solve_bp(A, y, BpConfig(eta=eta))
    b = solve_bp(A, c * y, BpConfig(eta=c * eta))
    assert b.objective == pytest.approx(c * a.objective, rel=1e-8)
    assert np.allclose(b.x, c * a.x, rtol=0, atol=1e-8 * c * max(np.abs(a.x).max(), 1))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_real_data_gives_real_solution(seed):
    A, _ = gaussian_instance(seed, 16, 32, 3)
    x = np.zeros(32)
    x[np.random.default_rng(seed).choice(32, 3, replace=False)] = [1.0, -2.0, 0.5]
    res = solve_bp(A.astype(complex), (A @ x).astype(complex))
    assert np.abs(res.x.imag).max() <= 1e-8


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 0.5))
def test_feasibility_and_sandwich(seed, eta):
    A, x = gaussian_instance(seed, 20, 40, 4)
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(20)
    y = A @ x + eta * e / np.linalg.norm(e)
    res = solve_bp(A, y, BpConfig(eta=eta))
    if res.converged:
        assert res.residual <= eta + 1e-8 * np.linalg.norm(y) + 1e-12
    assert res.objective <= np.abs(x).sum() + 1e-6


def test_recovery_error_examples():
    x = draw_sparse(16, 3, seed=0).x
    err = recovery_error(x, x, 3)
    assert err.l2_error == 0 and err.bound_rhs == 0 and err.ratio == 0
    err = recovery_error(np.zeros(16), x, 3, eta=0.1)
    assert err.bound_rhs == pytest.approx(np.sqrt(3) * 0.1)
    part = LevelPartition.contiguous(16, 2)
    err = recovery_error(np.zeros(16), np.ones(16), 4, lam=1, partition=part)
    assert err.best_approx_error == 12


def test_compressible_ratio_bounded():
    N, m, s, n = 64, 32, 4, 100
    xs, As = [], []
    for k in range(n):
        rng = np.random.default_rng(k)
        xs.append(rng.permutation(np.arange(1, N + 1) ** -1.5) * np.exp(2j * np.pi * rng.random(N)))
        As.append(rng.standard_normal((m, N)) / np.sqrt(m))
    Y = np.einsum("bmn,bn->bm", np.array(As), np.array(xs))
    results = solve_bp_batch(np.array(As), Y, BpConfig(tol_rel=1e-6))
    ratios = np.array([recovery_error(r.x, x, s).ratio for r, x in zip(results, xs)])
    assert np.all(np.isfinite(ratios))
    assert ratios.max() <= 10 * np.median(ratios)
