import numpy as np
import pytest
from scipy.optimize import linprog

from ocskit import simplex
from ocskit.simplex import Status


def highs(c, A_ub, b_ub, A_eq=None, b_eq=None, free=()):
    n = len(c)
    bnds = [(None, None) if j in free else (0, None) for j in range(n)]
    return linprog(-np.asarray(c), A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bnds,
                   method="highs")


def test_textbook_problem():
    # max 3x + 5y  s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  -> (2, 6), 36
    res = simplex.solve([3, 5], [[1, 0], [0, 2], [3, 2]], [4, 12, 18])
    assert res.status is Status.OPTIMAL
    assert res.objective == pytest.approx(36)
    assert res.x == pytest.approx([2, 6])


@pytest.mark.parametrize("seed", range(12))
def test_random_problems_match_highs(seed):
    rng = np.random.default_rng(seed)
    m, n = rng.integers(3, 15), rng.integers(2, 12)
    A = rng.normal(size=(m, n))
    x0 = rng.random(n)
    b = A @ x0 + rng.random(m)  # feasible at x0
    c = rng.normal(size=n)
    A = np.vstack([A, np.ones((1, n))])
    b = np.append(b, 10 + x0.sum())  # bounded
    ref = highs(c, A, b)
    res = simplex.solve(c, A, b)
    assert res.status is Status.OPTIMAL
    assert res.objective == pytest.approx(-ref.fun, abs=1e-7)
    assert np.all(A @ res.x <= b + 1e-8) and np.all(res.x >= -1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_equalities_and_free_variables_match_highs(seed):
    rng = np.random.default_rng(100 + seed)
    n = 6
    A_eq = rng.normal(size=(2, n))
    x0 = rng.normal(size=n)
    x0[2:] = np.abs(x0[2:])
    b_eq = A_eq @ x0
    A_ub = np.vstack([np.eye(n), -np.eye(n)])
    b_ub = np.full(2 * n, 5.0)
    c = rng.normal(size=n)
    ref = highs(c, A_ub, b_ub, A_eq, b_eq, free=(0, 1))
    res = simplex.solve(c, A_ub, b_ub, A_eq, b_eq, free=(0, 1))
    assert res.status is Status.OPTIMAL
    assert res.objective == pytest.approx(-ref.fun, abs=1e-7)
    assert A_eq @ res.x == pytest.approx(b_eq, abs=1e-8)


def test_negative_rhs_needs_phase_one():
    # max -x - y  s.t. x + y >= 2 (as -x - y <= -2), x <= 3
    res = simplex.solve([-1, -1], [[-1, -1], [1, 0]], [-2, 3])
    assert res.status is Status.OPTIMAL and res.objective == pytest.approx(-2)
    assert res.phase1_iterations >= 1


def test_infeasible():
    res = simplex.solve([1, 1], [[1, 1], [-1, -1]], [1, -2])
    assert res.status is Status.INFEASIBLE
    res = simplex.solve([1], A_eq=[[1]], b_eq=[-1])
    assert res.status is Status.INFEASIBLE


def test_unbounded():
    res = simplex.solve([1, 1], [[1, -1]], [1])
    assert res.status is Status.UNBOUNDED
    res = simplex.solve([1], free=(0,), A_ub=[[-1]], b_ub=[0])
    assert res.status is Status.UNBOUNDED


def test_degenerate_problem_without_perturbation_uses_bland(monkeypatch):
    # a classic cycling example for the largest-coefficient rule
    c = [10, -57, -9, -24]
    A = [[0.5, -5.5, -2.5, 9], [0.5, -1.5, -0.5, 1], [1, 0, 0, 0]]
    b = [0, 0, 1]
    monkeypatch.setattr(simplex, "STALL_LIMIT", 2)
    res = simplex.solve(c, A, b, perturb=False)
    assert res.status is Status.OPTIMAL
    assert res.objective == pytest.approx(1.0)
    assert res.bland_pivots > 0
    ref = highs(c, A, b)
    assert res.objective == pytest.approx(-ref.fun)


def test_degenerate_problem_with_perturbation():
    c = [10, -57, -9, -24]
    A = [[0.5, -5.5, -2.5, 9], [0.5, -1.5, -0.5, 1], [1, 0, 0, 0]]
    res = simplex.solve(c, A, [0, 0, 1])
    assert res.status is Status.OPTIMAL and res.objective == pytest.approx(1.0)
    assert np.all(np.asarray(A) @ res.x <= np.array([0, 0, 1]) + 1e-12)


def test_iteration_limit():
    res = simplex.solve([3, 5], [[1, 0], [0, 2], [3, 2]], [4, 12, 18], max_iter=1)
    assert res.status is Status.ITERATION_LIMIT


def test_no_constraints():
    res = simplex.solve([-1, -2])
    assert res.status is Status.OPTIMAL and res.objective == 0
