"""Per-iteration inequality suite evaluated on a stored trajectory.

Every inequality is checked as ``lhs <= rhs + slack`` where the slack
absorbs the inexact subproblem solve (10 * tol, scaled where the quantity
itself scales). Hard checks count towards ``passed``; diagnostics are
reported alongside but never fail the suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .driver import AlgoParams, Trajectory
from .errors import PreconditionViolation
from .metrics import dual_energy, increment_terms
from .models import DerivedConstants, build_models, derived_constants, eval_models
from .problem import SampleRecord, StochasticProgram


@dataclass
class CheckResult:
    name: str
    checked: int
    violations: int
    max_excess: float
    hard: bool = True

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def line(self) -> str:
        kind = "hard" if self.hard else "diag"
        status = "PASS" if self.passed else "FAIL"
        return f"{status} [{kind}] {self.name}: {self.violations}/{self.checked} violations, max excess {self.max_excess:.3e}"


@dataclass
class CheckReport:
    results: dict = field(default_factory=dict)
    observations: dict = field(default_factory=dict)

    def add(self, name, lhs, rhs, slack, hard=True):
        lhs, rhs, slack = (np.atleast_1d(np.asarray(v, float)) for v in (lhs, rhs, slack))
        excess = lhs - rhs - slack
        self.results[name] = CheckResult(
            name,
            int(excess.size),
            int(np.count_nonzero(excess > 0)),
            float(excess.max()) if excess.size else float("-inf"),
            hard,
        )

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values() if r.hard)

    def hard_violations(self) -> int:
        return sum(r.violations for r in self.results.values() if r.hard)

    def lines(self):
        return [r.line() for r in self.results.values()]


def check_trajectory(
    program: StochasticProgram,
    traj: Trajectory,
    params: AlgoParams | None = None,
    consts: DerivedConstants | None = None,
    reference_points: int = 0,
    rng_seed: int = 0,
) -> CheckReport:
    """Run the suite; ``reference_points`` > 0 adds the generalized descent
    inequality at that many random (z, v) per iteration (slow, debug use)."""
    params = traj.params if params is None else params
    T = params.T
    if traj.completed != T:
        raise PreconditionViolation("trajectory is incomplete")
    consts = derived_constants(program, params.sigma_g, params.sigma_h) if consts is None else consts
    p, m = program.p, program.m
    sg, sh, alpha, kappa = params.sigma_g, params.sigma_h, params.alpha, params.alpha + params.c
    T1 = min(params.T1, T)
    report = CheckReport()

    tol = traj.tol  # per step t = 1..T
    y_norm = traj.dual_norm  # states t = 1..T+1
    dx = np.diff(traj.x, axis=0)
    dx_norm = np.linalg.norm(dx, axis=1)
    du = np.diff(traj.u, axis=0)
    lam0, lam1 = traj.lam[:-1], traj.lam[1:]
    mp0, mp1 = traj.mu_plus[:-1], traj.mu_plus[1:]
    mm0, mm1 = traj.mu_minus[:-1], traj.mu_minus[1:]
    u0, u1 = traj.u[:-1], traj.u[1:]
    beta = traj.beta[:-1]
    G, H = traj.G, traj.H
    step_slack = 10 * tol * (1 + y_norm[:-1])

    # one-step descent with the reference point at the current state
    energy_next = dual_energy(lam1, mp1, mm1, sg, sh)
    lhs = (
        np.einsum("ij,ij->i", traj.grad_F, dx)
        + (0.5 * traj.curv0 + alpha) * dx_norm**2
        + kappa * np.sum(du**2, axis=1)
        + beta * np.sum(du, axis=1)
        + energy_next
    )
    rhs = dual_energy(np.maximum(lam0 + sg * G, 0), np.maximum(mp0 + sh * (H - u0), 0), np.maximum(mm0 + sh * (-H - u0), 0), sg, sh)
    report.add("one_step_descent", lhs, rhs, step_slack)

    # increment bound
    B = np.zeros(T)
    C = np.zeros(T)
    for k in range(T):
        B[k], C[k] = increment_terms(params, consts, program, lam0[k], mp0[k], mm0[k], G[k], H[k], u0[k], beta[k])
    report.add("increment_bound", params.Gamma * dx_norm**2, C + B * dx_norm, step_slack)

    # dual norm grows by at most gamma_sigma per step
    growth = y_norm[1:] - y_norm[:-1]
    report.add("upward_dual_growth", growth, consts.gamma_sigma, 10 * tol)
    report.observations["downward_excursions"] = int(np.count_nonzero(-growth > consts.gamma_sigma + 10 * tol))
    report.observations["max_dual_drop"] = float(max(0.0, -growth.min()))

    if T1 > 0:
        ph = slice(0, T1)
        # dual deviation from the un-linearized ascent step
        dev_lam = np.abs(lam1[ph] - np.maximum(lam0[ph] + sg * G[ph], 0))
        report.add("dual_deviation_lambda", dev_lam, (sg * consts.C_G * dx_norm[ph])[:, None], (10 * tol[ph])[:, None])
        cap_mu = (sh * consts.C_H * dx_norm[ph])[:, None] + sh * np.abs(du[ph])
        dev_p = np.abs(mp1[ph] - np.maximum(mp0[ph] + sh * (H[ph] - u0[ph]), 0))
        dev_m = np.abs(mm1[ph] - np.maximum(mm0[ph] + sh * (-H[ph] - u0[ph]), 0))
        report.add("dual_deviation_mu", np.concatenate([dev_p, dev_m]), np.concatenate([cap_mu, cap_mu]), np.concatenate([10 * tol[ph]] * 2)[:, None])

        # Phase I sparsity and feedback cap
        if m:
            report.add("phase_one_zero_slack", np.abs(traj.u[: T1]).max(axis=1), 0.0, 0.0)
            fb = np.maximum(traj.feedback_a[ph], 0) + np.maximum(traj.feedback_b[ph], 0)
            report.add("phase_one_feedback_cap", fb, beta[ph, None], (10 * tol[ph])[:, None])
            report.add("phase_one_multiplier_cap", mp1[ph] + mm1[ph], beta[ph, None], 1e-9)

    # Phase II slack trajectory
    if m and T1 < T:
        n_index = np.arange(1, T - T1 + 1)  # rows T1..T-1 hold t = T1 + n
        u_phase2 = traj.u[T1:T]
        bound = sh * params.C_qH / kappa * n_index * (n_index + 1)
        report.add("phase_two_pointwise_slack", u_phase2, bound[:, None], 10 * tol[T1:T, None])
        total = sh * u_phase2.sum(axis=0)
        report.add(
            "phase_two_slack_sum",
            total,
            params.c_h**2 * params.C_qH / (3 * params.c0) * (1 + 1 / T) ** 3,
            T * float(tol.max()),
        )

    # telescoped constraint sums, every prefix
    path_dx = np.cumsum(dx_norm)
    k_slack = np.arange(1, T + 1) * 10 * tol.max()
    if p:
        lhs = np.cumsum(G, axis=0)
        rhs = lam1 / sg + consts.C_G * path_dx[:, None]
        report.add("inequality_sum", lhs, rhs, k_slack[:, None])
    if m:
        u_path = np.cumsum(u1, axis=0)
        lhs = np.cumsum(np.abs(H), axis=0)
        rhs = (mp1 + mm1) / sh + consts.C_H * path_dx[:, None] + u_path
        report.add("equality_abs_sum", lhs, rhs, k_slack[:, None])
        # sign-separated form: each multiplier only controls its own sign
        tail = consts.C_H * path_dx[:, None] + u_path
        report.add(
            "equality_signed_sums",
            np.concatenate([np.cumsum(H, axis=0), np.cumsum(-H, axis=0)]),
            np.concatenate([mp1 / sh + tail, mm1 / sh + tail]),
            np.concatenate([k_slack, k_slack])[:, None],
            hard=False,
        )

    # sample-path complementarity, every prefix
    energy = dual_energy(traj.lam, traj.mu_plus, traj.mu_minus, sg, sh)
    lhs = -np.cumsum(np.einsum("ij,ij->i", lam0, G)) if p else np.zeros(T)
    rhs = (
        energy[0]
        - energy[1:]
        + np.cumsum(0.5 * sg * np.sum(G**2, axis=1) + sh * np.sum(H**2, axis=1) + np.sum(traj.grad_F**2, axis=1) / (2 * alpha))
        + sh * np.cumsum(np.sum(u0**2, axis=1))
    )
    if m:
        rhs = rhs + params.beta_max * np.sum((mp1 + mm1) / sh + consts.C_H * path_dx[:, None] + np.cumsum(u1, axis=0), axis=1)
    report.add("complementarity_path", lhs, rhs, k_slack)

    if reference_points > 0:
        _general_descent(report, program, traj, params, reference_points, rng_seed)

    report.observations.update(
        T=T,
        T1=T1,
        max_slack=float(traj.u.max()) if traj.u.size else 0.0,
        slack_cap_4CqH=4 * params.C_qH,
    )
    return report


def _general_descent(report, program, traj, params, count, rng_seed):
    """Descent inequality against arbitrary reference points (z, v) in X0 x R_+^m."""
    k = program.constants
    sg, sh, alpha, kappa = params.sigma_g, params.sigma_h, params.alpha, params.alpha + params.c
    rng = np.random.default_rng(rng_seed)
    D0 = program.diameter
    lhs_all, rhs_all, slack_all = [], [], []
    for step in range(params.T):
        x0, x1, u0, u1 = traj.x[step], traj.x[step + 1], traj.u[step], traj.u[step + 1]
        duals = traj.duals_at(step + 1)
        record = SampleRecord(traj.F[step], traj.grad_F[step], traj.G[step], traj.jac_G[step], traj.H[step], traj.jac_H[step])
        models = build_models(record, x0, k.L_g, k.L_h, duals, params.tau)
        beta = traj.beta[step]
        dx = x1 - x0
        lhs = (
            float(models.grad_F @ dx)
            + 0.5 * models.curv0 * float(dx @ dx)
            + beta * float(u1.sum())
            + dual_energy(traj.lam[step + 1], traj.mu_plus[step + 1], traj.mu_minus[step + 1], sg, sh)
            + 0.5 * alpha * float(dx @ dx)
            + 0.5 * kappa * float((u1 - u0) @ (u1 - u0))
        )
        zs = program.feasible_set.random_points(rng, count)
        scale = float(u1.max()) + 1.0 if u1.size else 1.0
        for z in zs:
            v = rng.uniform(0.0, scale, size=u0.size)
            dz = z - x0
            _, qG, qHp, qHm = eval_models(models, z)
            rhs = (
                float(models.grad_F @ dz)
                + 0.5 * models.curv0 * float(dz @ dz)
                + beta * float(v.sum())
                + dual_energy(
                    np.maximum(duals.lam + sg * qG, 0),
                    np.maximum(duals.mu_plus + sh * (qHp - v), 0),
                    np.maximum(duals.mu_minus + sh * (qHm - v), 0),
                    sg,
                    sh,
                )
                + 0.5 * alpha * (float(dz @ dz) - float((z - x1) @ (z - x1)))
                + 0.5 * kappa * (float((v - u0) @ (v - u0)) - float((v - u1) @ (v - u1)))
            )
            lhs_all.append(lhs)
            rhs_all.append(rhs)
            slack_all.append(10 * traj.tol[step] * (1 + duals.norm) * (1 + D0 + scale))
    report.add("general_descent", lhs_all, rhs_all, slack_all)
