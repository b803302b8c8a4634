"""
Unit tests for the active-set QP solver.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_almost_equal

from cartsim.shared.policies.qp import ActiveSetSolver, kkt_residuals, solve_qp
from cartsim.shared.utils.errors import QPInfeasible


def test_unconstrained_minimizer_is_returned_when_feasible():
    H, g = np.eye(2), np.array([-1.0, 0.0])
    solution = solve_qp(H, g, np.array([[1.0, 0.0]]), np.array([2.0]))
    assert solution.iterations == 0
    assert solution.active == ()
    assert_allclose(solution.x, [1.0, 0.0])


def test_single_active_constraint():
    H, g = np.eye(2), np.array([-2.0, -2.0])
    A, b = np.array([[1.0, 1.0]]), np.array([1.0])
    solution = solve_qp(H, g, A, b)
    assert_allclose(solution.x, [0.5, 0.5])
    assert solution.active == (0,)
    assert_almost_equal(solution.multipliers[0], 1.5)


def test_box_with_one_active_bound():
    # Only the upper x-bound is active at the optimum.
    H, g = np.eye(2), np.array([-2.0, 0.5])
    A = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    b = np.array([1.0, 1.0, 1.0, 1.0])
    solution = solve_qp(H, g, A, b)
    assert_allclose(solution.x, [1.0, -0.5], atol=1e-10)
    assert solution.active == (0,)
    assert max(kkt_residuals(H, g, A, b, solution).values()) <= 1e-10


def test_infeasible_constraints_raise():
    A = np.array([[1.0], [-1.0]])
    b = np.array([-1.0, -1.0])
    with pytest.raises(QPInfeasible):
        solve_qp(np.eye(1), np.zeros(1), A, b)


def test_random_instances_satisfy_kkt():
    rng = np.random.default_rng(7)
    solver = ActiveSetSolver()
    for k in range(60):
        n = 1 + k % 5
        L = rng.normal(size=(n, n))
        H = L @ L.T + n * np.eye(n)
        g = rng.normal(scale=3.0, size=n)
        A = rng.normal(size=(2 * n + 1, n))
        b = A @ rng.normal(size=n) + rng.uniform(0.0, 1.0, size=2 * n + 1)
        solution = solver.solve(H, g, A, b)
        residuals = kkt_residuals(H, g, A, b, solution)
        assert max(residuals.values()) <= 1e-8, residuals


def test_kkt_residuals_flag_a_wrong_point():
    from cartsim.shared.policies.qp import QPSolution

    H, g = np.eye(1), np.zeros(1)
    A, b = np.array([[1.0]]), np.array([-1.0])
    wrong = QPSolution(x=np.array([0.0]), active=(), multipliers=np.zeros(1), iterations=0)
    residuals = kkt_residuals(H, g, A, b, wrong)
    assert_almost_equal(residuals["primal"], 1.0)
