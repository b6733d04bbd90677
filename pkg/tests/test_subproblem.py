import numpy as np
import pytest

from instances import random_instance
from oracles import subproblem_objective_loop
from proxpep.errors import ConvergenceFailure, InvalidArgument, PreconditionViolation, UnsupportedSize
from proxpep.models import DualState, QuadModelSet
from proxpep.problem import Box
from proxpep.slack import slack_prox
from proxpep.subproblem import SubproblemInstance, brute_force, dual_feedback, objective, solve


def _models(n=1, p=0, m=0, grad=None, curv0=1.0, G=None, H=None):
    return QuadModelSet(
        anchor=np.zeros(n), F=0.7, grad_F=np.zeros(n) if grad is None else np.asarray(grad, float), curv0=curv0,
        G=np.full(p, -5.0) if G is None else np.asarray(G, float), jac_G=np.zeros((p, n)), curv_G=np.zeros(p),
        H=np.zeros(m) if H is None else np.asarray(H, float), jac_H=np.zeros((m, n)), curv_H=np.zeros(m),
    )


def _instance(models, duals=None, alpha=1.0, beta=0.0, c=1.0, sigma=1.0, box=10.0):
    n, p, m = models.anchor.size, models.p, models.m
    return SubproblemInstance(
        models, duals or DualState.zeros(p, m), np.zeros(n), np.zeros(m), sigma, sigma, alpha, c, beta,
        Box(np.full(n, -box), np.full(n, box)),
    )


def test_objective_trivial_case_is_sampled_value():
    md = _models(n=2, p=2, m=1, G=[-1.0, -3.0], H=[-0.0])
    inst = _instance(md)
    assert objective(inst, np.zeros(2), np.zeros(1)) == md.F


def test_objective_penalty_bracket():
    md = _models(n=1, p=1, G=[-2.0])
    inst = _instance(md, DualState(np.array([1.0]), np.zeros(0), np.zeros(0)))
    assert objective(inst, np.zeros(1), np.zeros(0)) - md.F == -0.5


def test_objective_matches_loop_oracle():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n, p, m = rng.integers(1, 5), rng.integers(0, 4), rng.integers(0, 4)
        inst = random_instance(rng, n, p, m)
        x = inst.feasible_set.project(rng.normal(size=n))
        u = rng.exponential(1.0, m)
        ref = subproblem_objective_loop(inst, x, u)
        assert objective(inst, x, u) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_objective_rejects_bad_input():
    inst = _instance(_models(n=2, m=1))
    with pytest.raises(InvalidArgument):
        objective(inst, np.zeros(3), np.zeros(1))
    with pytest.raises(PreconditionViolation):
        objective(inst, np.zeros(2), -np.ones(1))


def test_inactive_penalties_give_prox_step():
    inst = _instance(_models(n=1, p=1, grad=[1.0], curv0=1.0), beta=1.0)
    sol = solve(inst)
    assert sol.x_next[0] == pytest.approx(-0.5, abs=1e-8)
    assert sol.u_next.size == 0


def test_fixed_point_without_forces():
    inst = _instance(_models(n=2, p=1, m=1, H=[-0.0]), beta=1.0)
    sol = solve(inst)
    np.testing.assert_allclose(sol.x_next, 0.0, atol=1e-12)
    assert np.array_equal(sol.u_next, np.zeros(1))


def test_solution_invariants_and_certificate():
    rng = np.random.default_rng(1)
    for k in range(50):
        inst = random_instance(rng, 3, 2, 2, ball=bool(k % 2))
        tol = 1e-9
        sol = solve(inst, tol=tol)
        assert inst.feasible_set.distance(sol.x_next) <= 1e-12
        assert np.all(sol.u_next >= 0)
        assert sol.prox_grad_norm <= tol
        assert sol.objective == pytest.approx(objective(inst, sol.x_next, sol.u_next), rel=1e-10, abs=1e-10)


def test_convergence_failure_carries_best_iterate():
    rng = np.random.default_rng(2)
    inst = random_instance(rng, 3, 2, 2)
    with pytest.raises(ConvergenceFailure) as info:
        solve(inst, tol=1e-15, max_iters=2)
    assert info.value.residual > 0


def test_u_block_matches_scalar_prox():
    rng = np.random.default_rng(3)
    for _ in range(50):
        inst = random_instance(rng, 3, 1, 3)
        sol = solve(inst, tol=1e-10)
        a, b = dual_feedback(inst, sol.x_next)
        for j in range(3):
            ref = slack_prox(a[j], b[j], inst.beta, inst.sigma_h, inst.kappa_u, inst.u_prev[j]).u_star
            assert sol.u_next[j] == pytest.approx(ref, abs=1e-10)


def test_one_dimensional_active_bracket_matches_grid():
    md = QuadModelSet(
        anchor=np.zeros(1), F=0.0, grad_F=np.array([-2.0]), curv0=1.0,
        G=np.array([0.5]), jac_G=np.array([[1.0]]), curv_G=np.array([-0.1]),
        H=np.array([0.4]), jac_H=np.array([[0.5]]), curv_H=np.array([-0.1]),
    )
    duals = DualState(np.array([0.5]), np.array([0.2]), np.array([0.1]))
    inst = SubproblemInstance(md, duals, np.zeros(1), np.zeros(1), 1.0, 1.0, 1.0, 0.5, 0.3, Box(-np.ones(1) * 2, np.ones(1) * 2))
    sol = solve(inst, tol=1e-10)
    grid = brute_force(inst, 1e-4)
    assert np.linalg.norm(np.r_[sol.x_next, sol.u_next] - np.r_[grid.x_next, grid.u_next]) <= 5e-4
    assert sol.objective <= grid.objective + 1e-6
    # the inequality bracket really is active at the solution
    assert duals.lam[0] + inst.sigma_g * (0.5 + sol.x_next[0] - 0.05 * sol.x_next[0] ** 2) > 0


def test_brute_force_parabola_vertex():
    inst = _instance(_models(n=1, grad=[0.3], curv0=1.5), alpha=0.5, box=2.0)
    vertex = -0.3 / 2.0
    res = brute_force(inst, 1e-4)
    assert abs(res.x_next[0] - vertex) <= 1e-4


def test_brute_force_refinement_drift():
    md = QuadModelSet(
        anchor=np.zeros(2), F=0.0, grad_F=np.array([0.37, -0.61]), curv0=1.3,
        G=np.array([0.2]), jac_G=np.array([[1.0, 0.5]]), curv_G=np.array([-0.2]),
        H=np.zeros(0), jac_H=np.zeros((0, 2)), curv_H=np.zeros(0),
    )
    inst = _instance(md, DualState(np.array([0.4]), np.zeros(0), np.zeros(0)), alpha=0.9, box=1.0)
    exact = solve(inst, tol=1e-12).x_next
    drift = [np.linalg.norm(brute_force(inst, step).x_next - exact) for step in (1e-2, 1e-3, 1e-4)]
    for coarse, fine, step in zip(drift, drift[1:], (1e-2, 1e-3)):
        assert coarse <= step
        assert fine <= max(coarse, step / 10)
    assert drift[-1] <= 1e-4


def test_brute_force_size_limit():
    rng = np.random.default_rng(4)
    with pytest.raises(UnsupportedSize):
        brute_force(random_instance(rng, 3, 1, 1), 1e-3)
    with pytest.raises(InvalidArgument):
        brute_force(random_instance(rng, 1, 1, 1), 0.0)


def test_solve_beats_brute_force_on_tiny_instances():
    rng = np.random.default_rng(5)
    for k in range(20):
        inst = random_instance(rng, 1 + k % 2, 1, k % 2, ball=k % 4 == 3)
        sol = solve(inst, tol=1e-10)
        grid = brute_force(inst, 1e-4)
        assert sol.objective <= grid.objective + 1e-6


def test_objective_convex_along_segments():
    # tau large enough to absorb sigma * L * q on this box, the regime the schedule enforces
    rng = np.random.default_rng(6)
    inst = random_instance(rng, 3, 2, 2, tau=20.0)
    for _ in range(100):
        x0 = inst.feasible_set.project(rng.normal(size=3))
        x1 = inst.feasible_set.project(rng.normal(size=3))
        u0, u1 = rng.exponential(1.0, 2), rng.exponential(1.0, 2)
        ts = np.linspace(0, 1, 21)
        vals = np.array([objective(inst, (1 - t) * x0 + t * x1, (1 - t) * u0 + t * u1) for t in ts])
        assert np.all(vals[:-2] - 2 * vals[1:-1] + vals[2:] >= -1e-9)
