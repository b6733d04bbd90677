"""The two-phase proximal partial exact penalty iteration.

Each iteration samples one oracle record at x_t, builds the quadratic
models, solves the joint (x, u) subproblem, takes closed-form dual ascent
steps and advances the penalty parameter until it freezes at beta_max.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigurationError, ConvergenceFailure, InvalidArgument, InvalidState, PreconditionViolation
from .models import DualState, QuadModelSet, build_models, derived_constants, eval_models
from .problem import StochasticProgram, project, sample
from .slack import slack_prox_vec
from .subproblem import SubproblemInstance, solve

PHASE_I, PHASE_II = "I", "II"


class HorizonWarning(UserWarning):
    """The horizon is below the size the convergence theory asks for."""


@dataclass(frozen=True)
class Coefficients:
    """Base coefficients multiplying the power-law schedule."""

    c_g: float = 10.0
    c_h: float = 10.0
    tau0: float = 1.0
    c0: float = 1.0
    alpha0: float | None = None
    theta: float = 0.25
    tol_sub: float = 1e-8
    max_inner: int = 500

    def __post_init__(self):
        values = [self.c_g, self.c_h, self.tau0, self.c0, self.theta, self.tol_sub]
        if self.alpha0 is not None:
            values.append(self.alpha0)
        if any(not (np.isfinite(v) and v > 0) for v in values):
            raise InvalidArgument("schedule coefficients must be positive")


@dataclass(frozen=True)
class AlgoParams:
    T: int
    c_g: float
    c_h: float
    alpha0: float
    tau0: float
    c0: float
    sigma_g: float
    sigma_h: float
    alpha: float
    tau: float
    c: float
    beta1: float
    beta_max: float
    C_qH: float
    s: int
    theta: float
    T1: int
    tol_sub: float
    max_inner: int = 500
    Gamma: float = float("nan")
    Gamma_u: float = float("nan")
    warnings: tuple = field(default_factory=tuple)

    def phase(self, t: int) -> str:
        return PHASE_I if t <= self.T1 else PHASE_II

    def to_dict(self) -> dict:
        d = asdict(self)
        d["warnings"] = list(self.warnings)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AlgoParams":
        d = dict(d)
        d["warnings"] = tuple(d.get("warnings", ()))
        return cls(**d)


def increment_gamma(alpha, tau, sigma_g, sigma_h, p, m, C_G, C_H):
    """Curvature left over in the increment bound (must stay positive)."""
    return 0.5 * (alpha + tau) - 0.5 * p * sigma_g * C_G**2 - 2 * m * sigma_h * C_H**2


def increment_gamma_u(alpha, c, sigma_h):
    return alpha + 0.5 * c - 2 * sigma_h


def default_alpha0(program: StochasticProgram, c_g: float, c_h: float) -> float:
    k = program.constants
    c_gamma = math.sqrt(c_g**2 * k.nu_g**2 + 2 * c_h**2 * k.nu_h**2)
    return 2 * k.L0 + 2 * k.L_max * math.sqrt(program.p + 2 * program.m) * c_gamma + 1.0


def horizon_requirement(program: StochasticProgram, coeffs: Coefficients, D0: float | None = None) -> float:
    """Smallest T satisfying all three clauses of the horizon condition."""
    dc = derived_constants(program, 1.0, 1.0, D0)
    p, m = program.p, program.m
    clause2 = ((p * coeffs.c_g * dc.C_G**2 + 4 * m * coeffs.c_h * dc.C_H**2) / coeffs.tau0) ** 4
    clause3 = (4 * coeffs.c_h / coeffs.c0) ** (4.0 / 9.0)
    return max(1.0, clause2, clause3)


def phase_transition(params: AlgoParams) -> int:
    """Last Phase-I iteration: floor((beta_max - beta_1) / (2 sigma_h C_qH))."""
    step = 2 * params.sigma_h * params.C_qH
    if step <= 0 or params.beta_max <= params.beta1:
        return 0
    ratio = (params.beta_max - params.beta1) / step
    # the scheduled ratio is T^{3/4}; absorb rounding just below an integer
    return int(math.floor(ratio + 1e-9 * max(1.0, ratio)))


def schedule_params(
    T: int,
    coeffs: Coefficients | dict | None = None,
    program: StochasticProgram | None = None,
    D0: float | None = None,
    strict_gate: bool = True,
) -> AlgoParams:
    """Power-law parameters for horizon ``T``.

    Horizon-condition failures are reported through :class:`HorizonWarning`
    (and listed in ``params.warnings``); a failed feasibility gate raises
    :class:`ConfigurationError` unless ``strict_gate`` is off.
    """
    if program is None:
        raise InvalidArgument("a program is needed to derive the constants")
    if not (isinstance(T, (int, np.integer)) and T >= 1):
        raise InvalidArgument("T must be an integer >= 1")
    if coeffs is None:
        coeffs = Coefficients()
    elif isinstance(coeffs, dict):
        coeffs = Coefficients(**coeffs)
    T = int(T)
    D0 = program.diameter if D0 is None else float(D0)
    p, m = program.p, program.m
    k = program.constants

    sigma_g = coeffs.c_g * T ** (-0.75)
    sigma_h = coeffs.c_h * T ** (-0.75)
    alpha0 = default_alpha0(program, coeffs.c_g, coeffs.c_h) if coeffs.alpha0 is None else coeffs.alpha0
    alpha = alpha0 * T**0.25
    tau = coeffs.tau0 * T**0.5
    c = coeffs.c0 * T**1.5
    s = int(math.ceil(math.sqrt(T)))

    dc = derived_constants(program, sigma_g, sigma_h, D0)
    beta1 = 2 * dc.C_qH * sigma_h
    beta_max = beta1 + 2 * coeffs.c_h * dc.C_qH

    notes = []
    gate = math.sqrt(p + 2 * m) * k.L_max * D0**2
    if gate > k.eps0:
        msg = f"feasibility gate fails: sqrt(p+2m)*L_max*D0^2 = {gate:.4g} > eps0 = {k.eps0:.4g}"
        if strict_gate:
            raise ConfigurationError(msg)
        notes.append(msg)
    need = horizon_requirement(program, coeffs, D0)
    if T < need:
        msg = f"horizon T={T} below the admissible minimum {need:.6g}"
        notes.append(msg)
        warnings.warn(msg, HorizonWarning, stacklevel=2)

    Gamma = increment_gamma(alpha, tau, sigma_g, sigma_h, p, m, dc.C_G, dc.C_H)
    Gamma_u = increment_gamma_u(alpha, c, sigma_h)
    if Gamma <= 0 or Gamma_u <= 0:
        raise ConfigurationError(f"non-positive increment curvature (Gamma={Gamma:.3g}, Gamma_u={Gamma_u:.3g})")

    params = AlgoParams(
        T=T,
        c_g=coeffs.c_g,
        c_h=coeffs.c_h,
        alpha0=alpha0,
        tau0=coeffs.tau0,
        c0=coeffs.c0,
        sigma_g=sigma_g,
        sigma_h=sigma_h,
        alpha=alpha,
        tau=tau,
        c=c,
        beta1=beta1,
        beta_max=beta_max,
        C_qH=dc.C_qH,
        s=s,
        theta=coeffs.theta,
        T1=0,
        tol_sub=coeffs.tol_sub,
        max_inner=coeffs.max_inner,
        Gamma=Gamma,
        Gamma_u=Gamma_u,
        warnings=tuple(notes),
    )
    return _replace(params, T1=phase_transition(params))


def _replace(params: AlgoParams, **changes) -> AlgoParams:
    d = asdict(params)
    d.update(changes)
    return AlgoParams(**d)


def dual_update(models: QuadModelSet, x_next, u_next, duals: DualState, sigma_g: float, sigma_h: float) -> DualState:
    """Projected dual ascent on the model constraints at x_next."""
    u_next = np.asarray(u_next, dtype=float)
    if np.any(u_next < 0):
        raise PreconditionViolation("slacks must be non-negative")
    _, qG, qHp, qHm = eval_models(models, x_next)
    return DualState(
        np.maximum(duals.lam + sigma_g * qG, 0.0),
        np.maximum(duals.mu_plus + sigma_h * (qHp - u_next), 0.0),
        np.maximum(duals.mu_minus + sigma_h * (qHm - u_next), 0.0),
    )


def penalty_update(beta_t: float, sigma_h: float, C_qH: float, beta_max: float) -> float:
    """Grow the penalty by 2 sigma_h C_qH, capped at beta_max."""
    if beta_t > beta_max:
        raise InvalidState(f"penalty {beta_t} already above its cap {beta_max}")
    if beta_t < beta_max:
        return min(beta_t + 2 * sigma_h * C_qH, beta_max)
    return beta_max


def xi_seed(seed: int, t: int) -> int:
    """Key of the counter-based noise stream for iteration t of run ``seed``."""
    if seed < 0 or t < 0:
        raise InvalidArgument("seed and iteration must be non-negative")
    return (int(seed) << 32) | int(t)


def vector_digest(x: np.ndarray) -> str:
    """Platform-stable short hash: values are rounded to 12 significant digits first."""
    text = ",".join(f"{v:.12e}" for v in np.asarray(x, float).ravel())
    return hashlib.sha256(text.encode()).hexdigest()[:12]


@dataclass
class Trajectory:
    """Full record of a run.

    State arrays have T+1 rows, row k holding iteration t = k+1 (so row 0 is
    the starting point and row T the final state). Per-step arrays have T
    rows, row k describing the step taken at iteration t = k+1: the sampled
    record at x_t, the objective-model curvature, the dual feedbacks at
    x_{t+1}, and the subproblem diagnostics.
    """

    params: AlgoParams
    seed: int
    x: np.ndarray
    u: np.ndarray
    lam: np.ndarray
    mu_plus: np.ndarray
    mu_minus: np.ndarray
    beta: np.ndarray
    F: np.ndarray
    grad_F: np.ndarray
    G: np.ndarray
    jac_G: np.ndarray
    H: np.ndarray
    jac_H: np.ndarray
    curv0: np.ndarray
    feedback_a: np.ndarray
    feedback_b: np.ndarray
    residual: np.ndarray
    tol: np.ndarray
    inner_iterations: np.ndarray
    completed: int
    program_source: dict | None = None
    error: str | None = None

    @property
    def T(self) -> int:
        return self.params.T

    @property
    def dual_norm(self) -> np.ndarray:
        return np.sqrt(
            np.sum(self.lam**2, axis=1) + np.sum(self.mu_plus**2, axis=1) + np.sum(self.mu_minus**2, axis=1)
        )

    @property
    def dx_norm(self) -> np.ndarray:
        return np.linalg.norm(np.diff(self.x, axis=0), axis=1)

    def duals_at(self, t: int) -> DualState:
        k = t - 1
        return DualState(self.lam[k].copy(), self.mu_plus[k].copy(), self.mu_minus[k].copy())

    def phases(self) -> np.ndarray:
        t = np.arange(1, self.T + 2)
        return np.where(t <= self.params.T1, PHASE_I, PHASE_II)

    def summary(self) -> dict:
        done = self.completed
        y = self.dual_norm[: done + 1]
        return {
            "T": self.T,
            "T1": self.params.T1,
            "seed": self.seed,
            "completed": done,
            "final_x_digest": vector_digest(self.x[done]),
            "final_dual_norm": float(y[-1]),
            "mean_dual_norm": float(y[1:].mean()) if done else 0.0,
            "max_slack": float(self.u[: done + 1].max()) if self.u.size else 0.0,
            "max_residual": float(self.residual[:done].max()) if done else 0.0,
            "inner_iterations": int(self.inner_iterations[:done].sum()),
            "phase_one_slack_zero": bool(np.all(self.u[: min(self.params.T1, done + 1)] == 0.0)),
            "error": self.error or "",
        }

    def columnar_rows(self):
        """Rows of the text trajectory file, one per stored state."""
        y = self.dual_norm
        dx = np.append(self.dx_norm, np.nan)
        for k in range(self.completed + 1):
            t = k + 1
            residual = self.residual[k] if k < self.completed else float("nan")
            yield (
                t,
                self.params.phase(t),
                f"{self.beta[k]:.12e}",
                vector_digest(self.x[k]),
                f"{float(np.abs(self.u[k]).sum()):.12e}",
                f"{y[k]:.12e}",
                f"{dx[k]:.12e}" if k < self.completed else "nan",
                f"{residual:.6e}",
            )

    def save_npz(self, path):
        arrays = {
            name: getattr(self, name)
            for name in (
                "x", "u", "lam", "mu_plus", "mu_minus", "beta", "F", "grad_F", "G", "jac_G",
                "H", "jac_H", "curv0", "feedback_a", "feedback_b", "residual", "tol", "inner_iterations",
            )
        }
        meta = {
            "params": self.params.to_dict(),
            "seed": self.seed,
            "completed": self.completed,
            "program_source": self.program_source,
            "error": self.error,
        }
        np.savez_compressed(path, meta=np.array(json.dumps(meta)), **arrays)

    @classmethod
    def load_npz(cls, path) -> "Trajectory":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            arrays = {k: data[k] for k in data.files if k != "meta"}
        return cls(
            params=AlgoParams.from_dict(meta["params"]),
            seed=meta["seed"],
            completed=meta["completed"],
            program_source=meta["program_source"],
            error=meta["error"],
            **arrays,
        )


TRAJECTORY_HEADER = ("t", "phase", "beta", "x_digest", "u_l1", "dual_norm", "dx_norm", "sub_residual")


class RunAborted(RuntimeError):
    """A subproblem failed; the partial trajectory is attached."""

    def __init__(self, message, trajectory: Trajectory):
        super().__init__(message)
        self.trajectory = trajectory


def run(
    program: StochasticProgram,
    params: AlgoParams,
    seed: int,
    x_start=None,
) -> Trajectory:
    """Execute T iterations and return the full trajectory."""
    n, p, m, T = program.n, program.p, program.m, params.T
    k = program.constants
    x = project(k.x_tilde if x_start is None else np.asarray(x_start, float), program.feasible_set)
    u = np.zeros(m)
    duals = DualState.zeros(p, m)
    beta = params.beta1
    if params.beta1 > params.beta_max:
        raise ConfigurationError("beta_1 exceeds beta_max")

    traj = Trajectory(
        params=params,
        seed=int(seed),
        x=np.zeros((T + 1, n)),
        u=np.zeros((T + 1, m)),
        lam=np.zeros((T + 1, p)),
        mu_plus=np.zeros((T + 1, m)),
        mu_minus=np.zeros((T + 1, m)),
        beta=np.zeros(T + 1),
        F=np.zeros(T),
        grad_F=np.zeros((T, n)),
        G=np.zeros((T, p)),
        jac_G=np.zeros((T, p, n)),
        H=np.zeros((T, m)),
        jac_H=np.zeros((T, m, n)),
        curv0=np.zeros(T),
        feedback_a=np.zeros((T, m)),
        feedback_b=np.zeros((T, m)),
        residual=np.zeros(T),
        tol=np.zeros(T),
        inner_iterations=np.zeros(T, dtype=np.int64),
        completed=0,
        program_source=program.source,
    )
    traj.x[0] = x
    traj.beta[0] = beta

    for step in range(T):
        t = step + 1
        record = sample(program, x, xi_seed(seed, t))
        models = build_models(record, x, k.L_g, k.L_h, duals, params.tau)
        inst = SubproblemInstance(
            models, duals, x, u, params.sigma_g, params.sigma_h, params.alpha, params.c, beta, program.feasible_set
        )
        tol = params.tol_sub * (1.0 + float(np.linalg.norm(x)))
        try:
            sol = solve(inst, tol, params.max_inner)
        except ConvergenceFailure as exc:
            traj.error = f"iteration {t}: {exc}"
            raise RunAborted(traj.error, traj) from exc

        x_next = sol.x_next
        _, _, qHp, qHm = eval_models(models, x_next)
        a = duals.mu_plus + params.sigma_h * qHp
        b = duals.mu_minus + params.sigma_h * qHm
        # slack block re-finished in closed form with x frozen
        u_next = slack_prox_vec(a, b, beta, params.sigma_h, inst.kappa_u, u) if m else u
        duals = dual_update(models, x_next, u_next, duals, params.sigma_g, params.sigma_h)
        beta = penalty_update(beta, params.sigma_h, params.C_qH, params.beta_max)

        traj.F[step] = record.F
        traj.grad_F[step] = record.grad_F
        traj.G[step] = record.G
        traj.jac_G[step] = record.jac_G
        traj.H[step] = record.H
        traj.jac_H[step] = record.jac_H
        traj.curv0[step] = models.curv0
        traj.feedback_a[step] = a
        traj.feedback_b[step] = b
        traj.residual[step] = sol.prox_grad_norm
        traj.tol[step] = tol
        traj.inner_iterations[step] = sol.iterations
        traj.x[t] = x_next
        traj.u[t] = u_next
        traj.lam[t] = duals.lam
        traj.mu_plus[t] = duals.mu_plus
        traj.mu_minus[t] = duals.mu_minus
        traj.beta[t] = beta
        traj.completed = t
        x, u = x_next, u_next

    return traj


def run_timed(program, params, seed, x_start=None):
    start = time.perf_counter()
    traj = run(program, params, seed, x_start)
    return traj, time.perf_counter() - start
