"""Stationarity measures, KKT reports and the analysis threshold formulas.

All expectations here go through the program's deterministic oracle, so the
Lagrangian L(x, y) = f(x) + <lambda, g(x)> + <mu_plus - mu_minus, h(x)> is
evaluated exactly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from .driver import AlgoParams, Trajectory
from .errors import InvalidArgument, PreconditionViolation
from .models import DerivedConstants, DualState
from .optim import apg
from .problem import StochasticProgram

MOREAU_EQUIVALENCE_FACTOR = 1.0 + 1.0 / math.sqrt(2.0)


def _multipliers(y: DualState):
    return y.lam, y.mu_plus - y.mu_minus


def lagrangian_value(program: StochasticProgram, x, y: DualState) -> float:
    e = program.deterministic_oracle(np.asarray(x, float))
    lam, nu = _multipliers(y)
    return float(e.f + lam @ e.g + nu @ e.h)


def lagrangian_grad(program: StochasticProgram, x, y: DualState) -> np.ndarray:
    e = program.deterministic_oracle(np.asarray(x, float))
    lam, nu = _multipliers(y)
    return e.grad_f + lam @ e.jac_g + nu @ e.jac_h


def prox_residual(program: StochasticProgram, x, y: DualState, alpha: float) -> np.ndarray:
    """alpha * (x - P(x - grad_x L(x, y) / alpha))."""
    if not alpha > 0:
        raise InvalidArgument("alpha must be positive")
    x = np.asarray(x, float)
    grad = lagrangian_grad(program, x, y)
    return alpha * (x - program.feasible_set.project(x - grad / alpha))


def weak_modulus(program: StochasticProgram, y: DualState) -> float:
    """Weak-convexity modulus of L(., y) implied by the dual norm."""
    c = program.constants
    return c.L0 + c.L_max * math.sqrt(program.p + 2 * program.m) * y.norm


def _prox_point(program, x, y, alpha, modulus, tol, max_iters):
    if not alpha > 2 * modulus:
        raise PreconditionViolation(f"alpha={alpha:.4g} must exceed twice the weak modulus {modulus:.4g}")
    x = np.asarray(x, float)
    lam, nu = _multipliers(y)
    oracle = program.deterministic_oracle

    def fun(z):
        e = oracle(z)
        d = z - x
        value = e.f + lam @ e.g + nu @ e.h + 0.5 * alpha * float(d @ d)
        grad = e.grad_f + lam @ e.jac_g + nu @ e.jac_h + alpha * d
        return float(value), grad, None

    # curvature of L plus the prox term; backtracking corrects it if low
    c = program.constants
    guess = alpha + modulus + c.kappa_f + 1.0
    return apg(fun, x, program.feasible_set.project, guess, tol, max_iters)


def moreau_point(program, x, y: DualState, alpha: float, modulus: float | None = None, tol: float = 1e-10, max_iters: int = 5000):
    """argmin_z L(z, y) + (alpha/2)|z - x|^2 over the feasible set."""
    modulus = weak_modulus(program, y) if modulus is None else modulus
    return _prox_point(program, x, y, alpha, modulus, tol, max_iters).x


def moreau_envelope(program, x, y: DualState, alpha: float, modulus: float | None = None, tol: float = 1e-10, max_iters: int = 5000) -> float:
    modulus = weak_modulus(program, y) if modulus is None else modulus
    return _prox_point(program, x, y, alpha, modulus, tol, max_iters).value


def moreau_grad(program, x, y: DualState, alpha: float, weak_modulus_value: float | None = None, tol: float = 1e-10, max_iters: int = 5000) -> np.ndarray:
    """Gradient alpha * (x - x_hat) of the Moreau envelope of L(., y) + indicator."""
    x = np.asarray(x, float)
    x_hat = moreau_point(program, x, y, alpha, weak_modulus_value, tol, max_iters)
    return alpha * (x - x_hat)


@dataclass
class KKTReport:
    residual_norm: float
    max_g_violation: float
    max_abs_h: float
    complementarity: float
    epsilon: float | None = None
    passes: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool | None:
        return all(self.passes.values()) if self.passes else None


def kkt_report(program: StochasticProgram, x, y: DualState, alpha: float, eps: float | None = None) -> KKTReport:
    x = np.asarray(x, float)
    e = program.deterministic_oracle(x)
    r = float(np.linalg.norm(prox_residual(program, x, y, alpha)))
    g_viol = max(0.0, float(e.g.max())) if e.g.size else 0.0
    h_abs = float(np.abs(e.h).max()) if e.h.size else 0.0
    comp = -float(y.lam @ e.g)
    report = KKTReport(r, g_viol, h_abs, comp, eps)
    if eps is not None:
        report.passes = {
            "residual": r <= eps,
            "complementarity": comp >= -eps,
            "inequality": g_viol <= eps,
            "equality": h_abs <= eps,
        }
    return report


# ---------------------------------------------------------------------------
# threshold formulas


def upper_incomplete_gamma(a: float, x: float = 1.0) -> float:
    """Gamma(a, x) = int_x^inf u^(a-1) e^(-u) du.

    Integer ``a`` uses (a-1)! e^(-x) sum_{k<a} x^k / k!; other values fall
    back to the regularized function from scipy.
    """
    if a <= 0:
        raise InvalidArgument("the shape parameter must be positive")
    if float(a).is_integer():
        a = int(a)
        series = sum(x**k / math.factorial(k) for k in range(a))
        return math.factorial(a - 1) * math.exp(-x) * series
    return float(special.gammaincc(a, x) * special.gamma(a))


def stochastic_process_bound(theta: float, t0: int, delta_max: float, zeta: float, mu: float | None = None) -> float:
    """Expectation (or, with ``mu``, tail) bound for a drifting process."""
    if not (0 < zeta <= delta_max and t0 > 0):
        raise InvalidArgument("need 0 < zeta <= delta_max and t0 > 0")
    ratio = 4 * delta_max**2 / zeta
    bound = theta + t0 * delta_max + t0 * ratio * math.log(8 * delta_max**2 / zeta**2)
    if mu is not None:
        if not 0 < mu < 1:
            raise InvalidArgument("mu must lie in (0, 1)")
        bound += t0 * ratio * math.log(1.0 / mu)
    return bound


def increment_terms(params: AlgoParams, consts: DerivedConstants, program: StochasticProgram, lam, mu_plus, mu_minus, G, H, u, beta):
    """Linear and constant terms (B_t, C_t) of the per-iteration increment bound."""
    k = program.constants
    sg, sh = params.sigma_g, params.sigma_h
    a_lam = np.abs(lam + sg * G)
    a_plus = np.abs(mu_plus + sh * (H - u))
    a_minus = np.abs(mu_minus + sh * (-H - u))
    B = consts.C_G * float(a_lam.sum()) + consts.C_H * float((a_plus + a_minus).sum())
    C = k.kappa_f**2 / (2 * params.alpha) + float(((a_plus + a_minus + beta) ** 2).sum()) / (2 * params.c)
    return B, C


def beta_k(program: StochasticProgram, gamma_sigma: float, k: int) -> float:
    c = program.constants
    return c.L0 + c.L_max * math.sqrt(program.p + 2 * program.m) * k * gamma_sigma


@dataclass
class ThresholdReport:
    Gamma: float
    Gamma_u: float
    vartheta: float
    psi: float
    phi: float
    pi: float
    z_theta: float
    beta_k: float
    Delta_avg: float
    Delta_max: float
    rho_B1: float
    rho_B2: float
    rho_C1: float
    rho_C2: float
    c_gamma: float
    gamma3_bar: float
    gamma4_bar: float
    phi_tilde: float
    eta: float
    mu: float
    pi_grad: float
    pi_cg: float
    pi_ch: float
    pi_cm: float | None
    moreau_avg_bound: float
    ineq_avg_bound: float
    eq_avg_bound: float
    u_avg_bound: float
    collapse_term: float
    collapse_limit: float
    B_t: float | None = None
    C_t: float | None = None
    E_y: float | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def thresholds(
    params: AlgoParams,
    consts: DerivedConstants,
    program: StochasticProgram,
    state: dict | None = None,
    t: int = 1,
    k: int | None = None,
    eta: float | None = None,
    mu: float | None = None,
    f_gap: float | None = None,
    u_sums: tuple[float, float] | None = None,
) -> ThresholdReport:
    """Evaluate every bound at the given parameters.

    ``state`` (keys lam, mu_plus, mu_minus, G, H, u, beta) adds the
    state-dependent B_t, C_t and dual energy. ``f_gap`` stands for
    f(x_1) - inf f; by default the Lipschitz bound kappa_f * D0 is used.
    ``u_sums`` = (sum_t |u_t|^2, sum_t sum_j u_{t+1, j}) enables pi_cm.
    """
    kc = program.constants
    p, m = program.p, program.m
    T = params.T
    sg, sh, alpha, tau, c, s = params.sigma_g, params.sigma_h, params.alpha, params.tau, params.c, params.s
    D0 = program.diameter
    eps0 = kc.eps0
    gs = consts.gamma_sigma
    notes = []

    Gamma = 0.5 * (alpha + tau) - 0.5 * p * sg * consts.C_G**2 - 2 * m * sh * consts.C_H**2
    Gamma_u = alpha + 0.5 * c - 2 * sh
    if Gamma <= 0 or Gamma_u <= 0:
        notes.append("non-positive increment curvature")

    vartheta = (
        eps0 * sg * s / 4
        + gs * (s - 1)
        + 2 * (alpha + tau) * D0**2 / (eps0 * s)
        + 4 * kc.kappa_f * D0 / eps0
        + 2 * gs**2 / eps0
        + 4 * m * params.beta_max
    )
    drift = 16 * gs**2 / (sg * eps0)
    psi = vartheta + s * gs + s * drift * math.log(128 * gs**2 / (sg**2 * eps0**2)) if gs > 0 else vartheta
    eta = (2.0 / 3.0) * math.log(T) if eta is None else float(eta)
    mu = math.exp(-eta) / (T + 1) if mu is None else float(mu)
    phi = psi + drift * s * math.log(1.0 / mu)
    z_theta = psi + drift * s * t**params.theta

    th = params.theta
    inc = upper_incomplete_gamma(3 / th) + 2 * upper_incomplete_gamma(2 / th) + upper_incomplete_gamma(1 / th)
    pi = (
        psi**2
        + 32 * psi * drift / 16 * s * T**th / (th + 1)
        + 256 * gs**4 / (sg**2 * eps0**2) * s**2 * T ** (2 * th) / (2 * th + 1)
        + 2 * gs * (psi + drift * s * T**th / (th + 1))
        + gs**2
        + gs**2 / (T * th) * inc
    )

    c_gamma = math.sqrt(params.c_g**2 * kc.nu_g**2 + 2 * params.c_h**2 * kc.nu_h**2)
    gamma3 = psi
    r = c_gamma**2 / (params.c_g * eps0)
    gamma4 = (
        gamma3**2
        + 256 / 5 * gamma3 * r
        + 2048 / 3 * r**2
        + 2 * c_gamma * (gamma3 + 128 / 5 * r)
        + c_gamma**2
        + 4 * c_gamma**2 * (upper_incomplete_gamma(12) + 2 * upper_incomplete_gamma(8) + upper_incomplete_gamma(4))
    )

    u_max = consts.u_max
    rho_B1 = max(consts.C_G * math.sqrt(p), consts.C_H * math.sqrt(2 * m))
    rho_B2 = p * sg * consts.C_G * kc.nu_g + 2 * m * sh * consts.C_H * (kc.nu_h + u_max)
    rho_C1 = 1 / math.sqrt(2 * c)
    rho_C2 = kc.kappa_f / math.sqrt(2 * alpha) + math.sqrt(m) / math.sqrt(2 * c) * (2 * sh * (kc.nu_h + u_max) + params.beta_max)

    def increment(dual_bound):
        return (rho_B1 * dual_bound + rho_B2) / Gamma + (rho_C1 * dual_bound + rho_C2) / math.sqrt(Gamma)

    Delta_avg = increment(psi)
    phi_tilde = psi + 16 * r * T**-0.25 * math.ceil(math.sqrt(T)) * (eta + math.log(T + 1))
    Delta_max = increment(phi_tilde)

    f_gap = kc.kappa_f * D0 if f_gap is None else float(f_gap)
    root = math.sqrt(p + 2 * m)
    GD = consts.Gamma_Delta
    moreau_avg = (
        4 * (alpha + tau) / T * f_gap
        + 4 * consts.nu_max * root * (alpha + tau) / T * psi
        + 4 * (alpha + tau) * consts.nu_max * root * gs
        + 4 * alpha * D0 * GD
        + 4 * alpha / (alpha + tau) * ((kc.kappa_f + GD) ** 2 + consts.kappa_gh**2 * pi)
    )
    pi_grad = (
        4 * (alpha + tau) / T * f_gap
        + 4 * consts.nu_max * root * (alpha + tau) / T * phi_tilde
        + 4 * (alpha + tau) * consts.nu_max * root * gs
        + 4 * alpha * D0 * GD
        + 4 * alpha / (alpha + tau) * ((kc.kappa_f + GD) ** 2 + consts.kappa_gh**2 * phi_tilde**2)
    )
    u_avg = params.c_h * params.C_qH / (3 * params.c0) * T**-0.25 * (1 + 1 / T) ** 3
    ineq_avg = psi / (sg * T) + consts.C_G * Delta_avg
    eq_avg = psi / (sh * T) + consts.C_H * Delta_avg + u_avg
    pi_cg = eta * kc.rho_c * math.sqrt(T) + phi_tilde * T**0.75 / params.c_g + consts.C_G * T * Delta_max
    pi_ch = (
        eta * kc.rho_c * math.sqrt(T)
        + phi_tilde * T**0.75 / params.c_h
        + consts.C_H * T * Delta_max
        + params.c_h * params.C_qH / (3 * params.c0) * T**0.75 * (1 + 1 / T) ** 3
    )
    pi_cm = None
    if u_sums is not None:
        u_sq_sum, u_sum = u_sums
        pi_cm = (
            math.sqrt(p) * phi_tilde * kc.rho_c * eta * math.sqrt(T)
            + T * (sg / 2 * kc.nu_g**2 + sh * kc.nu_h**2)
            + T / (2 * params.alpha0 * T**0.25) * kc.kappa_f**2
            + sh * u_sq_sum
            + params.beta_max * (math.sqrt(2 * m) / sh * phi_tilde + m * consts.C_H * T * Delta_max + u_sum)
        )

    report = ThresholdReport(
        Gamma=Gamma,
        Gamma_u=Gamma_u,
        vartheta=vartheta,
        psi=psi,
        phi=phi,
        pi=pi,
        z_theta=z_theta,
        beta_k=beta_k(program, gs, T if k is None else k),
        Delta_avg=Delta_avg,
        Delta_max=Delta_max,
        rho_B1=rho_B1,
        rho_B2=rho_B2,
        rho_C1=rho_C1,
        rho_C2=rho_C2,
        c_gamma=c_gamma,
        gamma3_bar=gamma3,
        gamma4_bar=gamma4,
        phi_tilde=phi_tilde,
        eta=eta,
        mu=mu,
        pi_grad=pi_grad,
        pi_cg=pi_cg,
        pi_ch=pi_ch,
        pi_cm=pi_cm,
        moreau_avg_bound=moreau_avg,
        ineq_avg_bound=ineq_avg,
        eq_avg_bound=eq_avg,
        u_avg_bound=u_avg,
        collapse_term=gs**2 * s * T**0.25 / sg,
        collapse_limit=2 * c_gamma**2 / params.c_g,
        notes=notes,
    )
    if state is not None:
        B, C = increment_terms(
            params, consts, program, state["lam"], state["mu_plus"], state["mu_minus"], state["G"], state["H"], state["u"], state["beta"]
        )
        report.B_t, report.C_t = B, C
        report.E_y = dual_energy(state["lam"], state["mu_plus"], state["mu_minus"], sg, sh)
    return report


def dual_energy(lam, mu_plus, mu_minus, sigma_g, sigma_h):
    """|lambda|^2 / (2 sigma_g) + (|mu_plus|^2 + |mu_minus|^2) / (2 sigma_h)."""
    lam, mu_plus, mu_minus = (np.asarray(v, float) for v in (lam, mu_plus, mu_minus))
    energy = np.sum(lam**2, axis=-1) / (2 * sigma_g) + (np.sum(mu_plus**2, axis=-1) + np.sum(mu_minus**2, axis=-1)) / (2 * sigma_h)
    return float(energy) if np.ndim(energy) == 0 else energy


# ---------------------------------------------------------------------------
# trajectory replay


@dataclass
class MetricsSeries:
    """Per-iteration measures for t = 1..T (arrays indexed by t - 1).

    ``moreau_sq`` is only available at ``moreau_t`` (1-based iterations);
    the remaining series are evaluated at every iterate.
    """

    T: int
    alpha: float
    g_sum: np.ndarray
    g_violation: np.ndarray
    h_abs: np.ndarray
    complementarity: np.ndarray
    complementarity_abs: np.ndarray
    dual_energy: np.ndarray
    dual_norm: np.ndarray
    moreau_t: np.ndarray
    moreau_sq: np.ndarray
    residual_over_alpha: np.ndarray
    equivalence_slack: np.ndarray
    output_index: int
    output_kkt: KKTReport | None
    u_max_observed: float
    u_max_bound: float
    moreau_failures: int = 0

    @staticmethod
    def running_mean(series: np.ndarray) -> np.ndarray:
        return np.cumsum(series) / np.arange(1, series.size + 1)

    def averages(self) -> dict:
        out = {
            "mean_g_violation": float(self.g_violation.mean()),
            "mean_g_sum": float(self.g_sum.mean()),
            "mean_h_abs": float(self.h_abs.mean()),
            "mean_complementarity": float(self.complementarity.mean()),
            "mean_complementarity_abs": float(self.complementarity_abs.mean()),
            "mean_dual_norm": float(self.dual_norm.mean()),
            "u_max_observed": self.u_max_observed,
            "u_max_within_bound": bool(self.u_max_observed <= self.u_max_bound),
        }
        if self.moreau_sq.size:
            out["mean_moreau_sq"] = float(self.moreau_sq.mean())
            out["moreau_equivalence_holds"] = bool(np.all(self.equivalence_slack >= 0))
        return out


def default_stride(T: int) -> int:
    return 1 if T <= 1024 else int(math.ceil(T / 256))


def trajectory_metrics(
    program: StochasticProgram,
    traj: Trajectory,
    params: AlgoParams | None = None,
    mode: str = "full",
    stride: int | None = None,
    output_seed: int | None = None,
    inner_tol: float = 1e-10,
    eps: float | None = None,
) -> MetricsSeries:
    """Replay a completed trajectory through the deterministic oracle.

    ``mode="cheap"`` skips the Moreau solves. In full mode the Moreau
    gradient is evaluated every ``stride`` iterations (all of them for
    T <= 1024, about 256 points otherwise).
    """
    params = traj.params if params is None else params
    if traj.completed != params.T:
        raise PreconditionViolation("trajectory is incomplete")
    if mode not in ("full", "cheap"):
        raise InvalidArgument("mode must be 'full' or 'cheap'")
    T, p, m = params.T, program.p, program.m
    alpha = params.alpha

    g_sum = np.zeros(T)
    g_viol = np.zeros(T)
    h_abs = np.zeros(T)
    comp = np.zeros(T)
    comp_abs = np.zeros(T)
    for k in range(T):
        e = program.deterministic_oracle(traj.x[k])
        lam = traj.lam[k]
        if p:
            g_sum[k] = e.g.sum()
            g_viol[k] = np.maximum(e.g, 0.0).sum()
            comp[k] = -float(lam @ e.g)
            comp_abs[k] = float(np.abs(lam * e.g).sum())
        if m:
            h_abs[k] = np.abs(e.h).sum()

    energy = np.asarray(dual_energy(traj.lam[:T], traj.mu_plus[:T], traj.mu_minus[:T], params.sigma_g, params.sigma_h))
    dual_norm = traj.dual_norm[:T]

    if mode == "full":
        stride = default_stride(T) if stride is None else int(stride)
        moreau_t = np.arange(1, T + 1, stride)
    else:
        moreau_t = np.zeros(0, dtype=int)
    moreau_sq = np.zeros(moreau_t.size)
    res_over_alpha = np.zeros(moreau_t.size)
    slack = np.zeros(moreau_t.size)
    for i, t in enumerate(moreau_t):
        y = traj.duals_at(int(t))
        x = traj.x[t - 1]
        grad = moreau_grad(program, x, y, alpha, weak_modulus(program, y), tol=inner_tol)
        gnorm = float(np.linalg.norm(grad))
        moreau_sq[i] = gnorm**2
        res_over_alpha[i] = float(np.linalg.norm(prox_residual(program, x, y, alpha))) / alpha
        slack[i] = MOREAU_EQUIVALENCE_FACTOR * gnorm + 10 * inner_tol - res_over_alpha[i]

    seed = traj.seed if output_seed is None else output_seed
    rng = np.random.default_rng([int(seed), 0x52])
    R = int(rng.integers(1, T + 1))
    kkt = kkt_report(program, traj.x[R - 1], traj.duals_at(R), alpha, eps)

    u_max = float(traj.u.max()) if traj.u.size else 0.0
    return MetricsSeries(
        T=T,
        alpha=alpha,
        g_sum=g_sum,
        g_violation=g_viol,
        h_abs=h_abs,
        complementarity=comp,
        complementarity_abs=comp_abs,
        dual_energy=energy,
        dual_norm=dual_norm,
        moreau_t=moreau_t,
        moreau_sq=moreau_sq,
        residual_over_alpha=res_over_alpha,
        equivalence_slack=slack,
        output_index=R,
        output_kkt=kkt,
        u_max_observed=u_max,
        u_max_bound=4 * params.C_qH,
    )
