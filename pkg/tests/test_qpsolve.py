import numpy as np
import pytest

from clfwalk.qpsolve import (
    QPProblem,
    QPSolver,
    QPStatus,
    kkt_residual,
    solve_qp,
)
from qp_oracle import is_feasible, solve_oracle


def random_feasible_qp(rng, nv, nc):
    """A QP with PD cost and constraints guaranteed feasible at a random point."""
    Hh = rng.standard_normal((nv, nv))
    H = Hh @ Hh.T + nv * np.eye(nv)
    f = rng.standard_normal(nv)
    G = rng.standard_normal((nc, nv))
    x_feas = rng.standard_normal(nv)
    h = G @ x_feas + rng.uniform(0.0, 2.0, nc)
    return QPProblem(H=H, f=f, Gineq=G, h=h)


def test_single_active_constraint():
    # min x^2 s.t. x <= -1
    prob = QPProblem(H=[[2.0]], f=[0.0], Gineq=[[1.0]], h=[-1.0])
    sol = solve_qp(prob)
    assert sol.status is QPStatus.Optimal
    assert sol.x[0] == pytest.approx(-1.0, abs=1e-6)
    assert sol.z[0] == pytest.approx(2.0, abs=1e-4)


def test_unconstrained():
    prob = QPProblem(H=2.0 * np.eye(2), f=[-2.0, 0.0], Gineq=np.zeros((0, 2)), h=[])
    sol = solve_qp(prob)
    assert sol.status is QPStatus.Optimal
    assert np.allclose(sol.x, [1.0, 0.0], atol=1e-8)


def test_validation_errors():
    with pytest.raises(ValueError):
        QPProblem(H=[[1.0, 0.5], [0.0, 1.0]], f=[0, 0], Gineq=np.zeros((0, 2)), h=[])
    with pytest.raises(ValueError):
        QPProblem(H=[[-1.0]], f=[0.0], Gineq=np.zeros((0, 1)), h=[])
    with pytest.raises(ValueError):
        QPProblem(H=np.eye(11), f=np.zeros(11), Gineq=np.zeros((0, 11)), h=[])
    with pytest.raises(ValueError):
        solve_qp(QPProblem(H=[[1.0]], f=[0.0], Gineq=np.zeros((0, 1)), h=[]), max_iter=0)


def test_kkt_residual_exact_point():
    prob = QPProblem(H=[[2.0]], f=[0.0], Gineq=[[1.0]], h=[-1.0])
    p, d, c = kkt_residual(prob, np.array([-1.0]), np.array([2.0]))
    assert p <= 1e-12 and d <= 1e-12 and c <= 1e-12


def test_kkt_residual_interior_point():
    prob = QPProblem(H=2.0 * np.eye(2), f=[-2.0, -2.0], Gineq=[[1.0, 0.0]], h=[10.0])
    p, d, c = kkt_residual(prob, np.array([1.0, 1.0]), np.array([0.0]))
    assert p == 0.0 and d == 0.0 and c == 0.0


def test_kkt_residual_perturbed_point_positive():
    prob = QPProblem(H=[[2.0]], f=[0.0], Gineq=[[1.0]], h=[-1.0])
    p, d, c = kkt_residual(prob, np.array([-0.5]), np.array([3.0]))
    assert p > 0 and d > 0 and c > 0


def test_matches_oracle_on_random_feasible_qps():
    rng = np.random.default_rng(42)
    solver = QPSolver()
    for _ in range(200):
        nv = int(rng.integers(1, 7))
        nc = int(rng.integers(1, 13))
        prob = random_feasible_qp(rng, nv, nc)
        sol = solver.solve(prob, max_iter=50, tol=1e-11)
        assert sol.status is QPStatus.Optimal
        ref = solve_oracle(prob.H, prob.f, prob.Gineq, prob.h)
        assert ref is not None
        obj = 0.5 * sol.x @ prob.H @ sol.x + prob.f @ sol.x
        assert abs(obj - ref[1]) < 1e-8 * (1.0 + abs(ref[1]))
        assert np.max(np.maximum(prob.Gineq @ sol.x - prob.h, 0.0), initial=0.0) < 1e-8


def test_detects_infeasible():
    # x <= -1 and -x <= -1 cannot both hold
    prob = QPProblem(H=[[2.0]], f=[0.0], Gineq=[[1.0], [-1.0]], h=[-1.0, -1.0])
    sol = solve_qp(prob, max_iter=50)
    assert sol.status is QPStatus.Infeasible
    assert not is_feasible(prob.Gineq, prob.h)


def test_determinism():
    rng = np.random.default_rng(7)
    prob = random_feasible_qp(rng, 4, 8)
    a = QPSolver().solve(prob)
    b = QPSolver().solve(prob)
    assert np.array_equal(a.x, b.x)
    assert a.iterations == b.iterations


def test_workspace_reuse():
    rng = np.random.default_rng(1)
    solver = QPSolver()
    for _ in range(20):
        solver.solve(random_feasible_qp(rng, 3, 5))
    assert solver.workspace_allocations == 1
    solver.solve(random_feasible_qp(rng, 4, 5))
    assert solver.workspace_allocations == 2


def test_iteration_cap_returns_best_iterate():
    rng = np.random.default_rng(3)
    prob = random_feasible_qp(rng, 5, 10)
    sol = solve_qp(prob, max_iter=2)
    # two iterations cannot converge to 1e-7 from a cold start
    assert sol.status is QPStatus.MaxIterations
    assert np.all(np.isfinite(sol.x))
    assert sol.iterations == 2


def test_ill_conditioned_penalty_cost():
    """Heavily weighted slack variable (the d1 penalty regime) still converges."""
    H = np.diag([2.0, 2.0, 2e8])
    f = np.zeros(3)
    G = np.array([[0.3, -0.7, -1.0], [1.0, 0.2, 0.0], [-1.0, -0.2, 0.0]])
    h = np.array([-0.4, 5.0, 2.0])
    sol = solve_qp(QPProblem(H=H, f=f, Gineq=G, h=h))
    assert sol.status is QPStatus.Optimal
    ref = solve_oracle(H, f, G, h)
    obj = 0.5 * sol.x @ H @ sol.x + f @ sol.x
    assert abs(obj - ref[1]) < 1e-6 * (1.0 + abs(ref[1]))
