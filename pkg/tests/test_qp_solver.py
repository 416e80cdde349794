import numpy as np
import pytest

from oracles import qp_active_set_oracle, random_feasible_qp
from safe_imitation.qp_solver import (
    INFEASIBLE_RELAXED,
    MAX_ITERATIONS,
    OPTIMAL,
    QpProblem,
    QpSolver,
    solve,
)

N = 8
WIDE = 1e3


def problem(u_ref, A=None, l=None, W=None, lo=-WIDE, hi=WIDE):
    A = np.zeros((0, N)) if A is None else np.atleast_2d(A)
    l = np.zeros(0) if l is None else np.atleast_1d(l)
    return QpProblem(np.ones(N) if W is None else W, np.asarray(u_ref, float), A, l,
                     np.full(N, lo), np.full(N, hi))


def test_unconstrained_inside_box():
    u_ref = np.linspace(-1, 1, N)
    sol = solve(problem(u_ref))
    assert sol.status == OPTIMAL and np.array_equal(sol.u_star, u_ref)


def test_unconstrained_box_projection():
    u_ref = np.linspace(-5, 5, N)
    sol = solve(problem(u_ref, lo=-3, hi=3))
    assert np.array_equal(sol.u_star, np.clip(u_ref, -3, 3))


def test_single_halfspace():
    row = np.zeros(N)
    row[0] = 1.0
    sol = solve(problem(np.zeros(N), row, 0.5), tol=1e-9, max_iter=2000)
    assert sol.status == OPTIMAL
    np.testing.assert_allclose(sol.u_star, np.eye(N)[0] * 0.5, atol=1e-9)
    assert sol.multipliers[0] == pytest.approx(0.5, abs=1e-8)


def test_random_problems_against_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        W, u_ref, A, l = random_feasible_qp(rng)
        p = QpProblem(W, u_ref, A, l, np.full(N, -WIDE), np.full(N, WIDE))
        sol = solve(p, max_iter=5000, tol=1e-8)
        obj, _ = qp_active_set_oracle(W, u_ref, A, l)
        assert abs(p.objective(sol.u_star) - obj) < 1e-6
        assert np.all(A @ sol.u_star >= l - 1e-6)


def test_kkt_conditions():
    rng = np.random.default_rng(1)
    for _ in range(50):
        W, u_ref, A, l = random_feasible_qp(rng)
        p = QpProblem(W, u_ref, A, l, np.full(N, -WIDE), np.full(N, WIDE))
        sol = solve(p, max_iter=5000, tol=1e-8)
        lam = sol.multipliers
        assert np.all(lam >= -1e-8)
        np.testing.assert_allclose(W * (sol.u_star - u_ref) - A.T @ lam, 0.0, atol=1e-6)
        assert np.all(np.abs(lam * (A @ sol.u_star - l)) < 1e-6)


def test_box_always_respected():
    rng = np.random.default_rng(2)
    for _ in range(50):
        W, u_ref, A, l = random_feasible_qp(rng)
        p = QpProblem(W, 3 * u_ref, A, l, np.full(N, -1.0), np.full(N, 1.0))
        sol = solve(p)
        assert np.all(sol.u_star >= -1.0) and np.all(sol.u_star <= 1.0)


def test_redundant_row_leaves_solution():
    rng = np.random.default_rng(3)
    for _ in range(30):
        W, u_ref, A, l = random_feasible_qp(rng)
        p = QpProblem(W, u_ref, A, l, np.full(N, -WIDE), np.full(N, WIDE))
        base = solve(p, max_iter=5000, tol=1e-9).u_star
        row = rng.normal(size=N)
        extra = QpProblem(W, u_ref, np.vstack([A, row]), np.append(l, row @ base - 1.0),
                          p.u_min, p.u_max)
        np.testing.assert_allclose(solve(extra, max_iter=5000, tol=1e-9).u_star, base, atol=1e-6)


def test_warm_start_matches_cold_start():
    rng = np.random.default_rng(4)
    warm = QpSolver(max_iter=5000, tol=1e-8)
    for _ in range(30):
        W, u_ref, A, l = random_feasible_qp(rng)
        p = QpProblem(W, u_ref, A, l, np.full(N, -WIDE), np.full(N, WIDE))
        np.testing.assert_allclose(warm.solve(p).u_star, solve(p, 5000, 1e-8).u_star, atol=1e-6)


def test_deterministic():
    rng = np.random.default_rng(5)
    W, u_ref, A, l = random_feasible_qp(rng, m_max=10)
    p = QpProblem(W, u_ref, A, l, np.full(N, -2.0), np.full(N, 2.0))
    a, b = solve(p), solve(p)
    assert np.array_equal(a.u_star, b.u_star) and a.iterations == b.iterations


def test_infeasible_rows_are_relaxed():
    row = np.eye(N)[0]
    # u0 >= 1 and -u0 >= 1 cannot both hold
    p = problem(np.zeros(N), np.vstack([row, -row]), np.array([1.0, 1.0]), lo=-3, hi=3)
    sol = solve(p, max_iter=2000, tol=1e-8)
    assert sol.status == INFEASIBLE_RELAXED
    assert abs(sol.u_star[0]) < 1e-3
    assert np.all(np.abs(sol.u_star) <= 3)


def test_row_infeasible_within_box_is_relaxed():
    row = np.eye(N)[0]
    p = problem(np.zeros(N), row, 5.0, lo=-3, hi=3)
    sol = solve(p, max_iter=2000, tol=1e-8)
    assert sol.status == INFEASIBLE_RELAXED
    assert sol.u_star[0] == pytest.approx(3.0, abs=1e-6)


def test_iteration_cap_reports_status():
    rng = np.random.default_rng(6)
    seen = set()
    for _ in range(50):
        W, u_ref, A, l = random_feasible_qp(rng)
        p = QpProblem(W, u_ref, A, l, np.full(N, -WIDE), np.full(N, WIDE))
        sol = QpSolver(max_iter=1, tol=1e-12, polish=False).solve(p)
        seen.add(sol.status)
        assert sol.status in (OPTIMAL, MAX_ITERATIONS)
    assert MAX_ITERATIONS in seen


def test_problem_validation():
    with pytest.raises(ValueError):
        QpProblem(np.zeros(N), np.zeros(N), np.zeros((0, N)), np.zeros(0), -np.ones(N), np.ones(N))
    with pytest.raises(ValueError):
        QpProblem(np.ones(N), np.zeros(N), np.zeros((1, N)), np.zeros(2), -np.ones(N), np.ones(N))
    with pytest.raises(ValueError):
        QpProblem(np.ones(N), np.zeros(N), np.zeros((0, N)), np.zeros(0), np.ones(N), -np.ones(N))
