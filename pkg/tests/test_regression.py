import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from oracles import enumerate_optimum, grid_search_2d

from gridtopo.covariance import CovarianceMatrix, analytic_lc_covariance, analytic_theta_covariance
from gridtopo.fixtures import g2, g3, gstar, random_grid
from gridtopo.grid import build_laplacian
from gridtopo.learner import theoretical_thresholds
from gridtopo.regression import (NotPSDError, QuadraticObjective, available_backends,
                                 project_clipped_simplex, qp_solve, solve_complex_regression,
                                 solve_constrained_nodal_regression, solve_nodal_regression)


def _random_psd(rng, n, rank=None):
    A = rng.standard_normal((n, rank or n))
    return A @ A.T


def test_qp_examples():
    s = qp_solve(QuadraticObjective(np.eye(2), np.zeros(2), 3.0))
    assert np.allclose(s.x, 0) and s.cost == pytest.approx(3.0)
    s = qp_solve(QuadraticObjective(np.eye(2), np.ones(2), 3.0))
    # x'x - 2(x1 + x2) + d at (1/2, 1/2) is d - 3/2
    assert np.allclose(s.x, [0.5, 0.5], atol=1e-9) and s.cost == pytest.approx(1.5)
    assert s.kkt_residual <= 1e-9


def test_qp_rejects_non_psd():
    with pytest.raises(NotPSDError):
        qp_solve(QuadraticObjective(np.diag([1.0, -1.0]), np.zeros(2)))
    with pytest.raises(ValueError):
        QuadraticObjective(np.eye(2), np.zeros(3))


def test_qp_grid_search_oracle_2d():
    rng = np.random.default_rng(0)
    for _ in range(10):
        Q = _random_psd(rng, 2)
        c = rng.standard_normal(2)
        s = qp_solve(QuadraticObjective(Q, c, 5.0))
        # grid resolution 1e-3 leaves an O(step) gap above the true optimum
        assert s.cost <= grid_search_2d(Q, c, 5.0) + 1e-9
        assert s.cost >= grid_search_2d(Q, c, 5.0) - 1e-2 * np.abs(Q).max()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5), st.booleans())
def test_qp_matches_enumeration(seed, n, degenerate):
    rng = np.random.default_rng(seed)
    Q = _random_psd(rng, n, rank=max(1, n - 2) if degenerate else n)
    c = rng.standard_normal(n)
    d = float(rng.uniform(0, 3))
    for backend in available_backends():
        s = qp_solve(QuadraticObjective(Q, c, d), backend=backend)
        assert s.x.min() >= -1e-12 and s.x.sum() <= 1 + 1e-12
        assert s.cost == pytest.approx(enumerate_optimum(Q, c, d), abs=1e-5)


def test_backends_agree():
    rng = np.random.default_rng(5)
    backends = available_backends()
    for _ in range(20):
        Q = _random_psd(rng, 8, 5)
        c = rng.standard_normal(8)
        costs = [qp_solve(QuadraticObjective(Q, c), backend=b).cost for b in backends]
        assert max(costs) - min(costs) < 1e-8


@pytest.mark.parametrize("z,expected", [((0.2, 0.3), (0.2, 0.3)), ((0.6, 0.8), (0.4, 0.6)),
                                        ((-1, -1), (0, 0)), ((2.0, -1.0), (1.0, 0.0))])
def test_projection_examples(z, expected):
    assert np.allclose(project_clipped_simplex(z), expected)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=8))
def test_projection_is_nearest_feasible_point(z):
    z = np.array(z)
    p = project_clipped_simplex(z)
    assert p.min() >= 0 and p.sum() <= 1 + 1e-12
    # variational inequality: (z - p)'(y - p) <= 0 for feasible y, checked on vertices
    verts = [np.zeros(len(z))] + list(np.eye(len(z)))
    assert all((z - p) @ (v - p) <= 1e-9 for v in verts)


def _g3():
    H = build_laplacian(g3()).reorder((1, 2, 3))
    return analytic_theta_covariance(H, {1: 1.0, 3: 1.0}, {2})


def test_nodal_regression_g3():
    S = _g3()
    s2 = solve_nodal_regression(2, S)
    assert s2.cost == pytest.approx(0, abs=1e-10)
    assert s2.labels == (1, 3) and np.allclose(s2.x, [0.5, 0.5], atol=1e-6)
    s1 = solve_nodal_regression(1, S)
    assert s1.cost > theoretical_thresholds(g3(), 1.0).tau1 == pytest.approx((6 - np.sqrt(32)) / 21)
    assert s1.cost == pytest.approx(enumerate_optimum(
        S.sub((2, 3)).values, S.values[0, 1:], S.values[0, 0]), abs=1e-9)


def test_nodal_regression_fully_excited_g2():
    S = analytic_theta_covariance(build_laplacian(g2()), 1.0)
    assert solve_nodal_regression(1, S).cost > 0.1 and solve_nodal_regression(2, S).cost > 0.1


def test_constrained_regression():
    s = solve_constrained_nodal_regression(2, {2}, _g3())
    assert np.allclose(s.x, [0.5, 0.5], atol=1e-9) and abs(s.cost) < 1e-10
    grid = gstar((1.0, 2.0, 3.0, 4.0))
    S = analytic_theta_covariance(build_laplacian(grid), 1.0, {1})
    s = solve_constrained_nodal_regression(1, {1}, S)
    assert s.labels == (2, 3, 4)
    assert np.allclose(s.x, np.array([2.0, 3.0, 4.0]) / 10.0, atol=1e-8)
    with pytest.raises(ValueError, match="zero-injection"):
        solve_constrained_nodal_regression(1, {2}, _g3())


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_zero_cost_lies_in_nullspace(seed):
    grid = random_grid(np.random.default_rng(seed), n=int(np.random.default_rng(seed).integers(5, 15)))
    H = build_laplacian(grid)
    S = analytic_theta_covariance(H, 1.0, grid.zero_injection)
    J = np.linalg.inv(H.values)
    exc = H.index(grid.excited)
    for i in H.labels:
        s = solve_nodal_regression(i, S)
        if s.cost <= 1e-10:
            y = np.zeros(len(H.labels))
            y[H.index([i])[0]] = 1.0
            y[H.index(s.labels)] = -s.x
            assert np.abs(y @ J[:, exc]).max() <= 1e-6


def _lc(grid, U):
    Hb = build_laplacian(grid).reorder(grid.node_ids)
    Hg = build_laplacian(grid, "conductance").reorder(grid.node_ids)
    return analytic_lc_covariance(Hb, Hg, 1.0, U)


def test_complex_regression_g3_lossy():
    grid = g3().with_conductance_ratio(1.0)
    S = _lc(grid, {2})
    s2 = solve_complex_regression(2, S)
    assert abs(s2.cost) < 1e-9
    assert abs(np.imag(s2.x).sum()) <= 1e-9
    for i in (1, 3):
        s = solve_complex_regression(i, S)
        assert s.cost > 1e-3
        assert abs(np.imag(s.x).sum()) <= 1e-9
        assert s.cost == pytest.approx(_scipy_complex_cost(i, S), abs=1e-6)


def _scipy_complex_cost(i, S):
    from gridtopo.regression import complex_objective
    regs = [k for k in S.labels if k != i]
    m = len(regs)
    obj = complex_objective(i, regs, S)
    cons = [{"type": "ineq", "fun": lambda z: 1 - z[:m].sum()},
            {"type": "eq", "fun": lambda z: z[m:].sum()}]
    bounds = [(0, None)] * m + [(-1, 1)] * m
    best = np.inf
    for x0 in (np.zeros(2 * m), np.r_[np.full(m, 1 / m), np.zeros(m)]):
        r = minimize(obj, x0, jac=lambda z: 2 * (obj.Q @ z - obj.c), bounds=bounds,
                     constraints=cons, method="SLSQP", options={"ftol": 1e-14, "maxiter": 1000})
        best = min(best, r.fun)
    return best


def test_complex_real_part_matches_dc_when_lossless():
    grid = gstar((1.0, 2.0, 3.0, 4.0))
    S = _lc(grid, {1})
    for i in grid.node_ids:
        c = solve_complex_regression(i, S)
        r = solve_nodal_regression(i, S)
        assert np.allclose(np.real(c.x), r.x, atol=1e-6)
        assert np.allclose(np.imag(c.x), 0, atol=1e-6)


def test_complex_needs_joint_covariance():
    with pytest.raises(ValueError, match="joint"):
        solve_complex_regression(2, _g3())


def test_python_backend_always_available():
    assert "python" in available_backends()
    s = qp_solve(QuadraticObjective(np.eye(3), np.ones(3)), backend="python")
    assert np.allclose(s.x, 1 / 3) and s.backend == "python"
