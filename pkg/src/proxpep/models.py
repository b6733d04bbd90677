"""Quadratic surrogate models built from one sampled oracle record.

Around the anchor x_t every model is value + <gradient, x - x_t> +
(curvature / 2) |x - x_t|^2 with a scalar curvature. Constraint models use
the negative moduli, so they lie below the sampled constraint functions;
the objective model carries the compensating curvature that keeps the
augmented subproblem convex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, InvalidState, PreconditionViolation
from .problem import SampleRecord, StochasticProgram


@dataclass(frozen=True)
class DualState:
    """Multipliers (lambda, mu_plus, mu_minus), all non-negative."""

    lam: np.ndarray
    mu_plus: np.ndarray
    mu_minus: np.ndarray

    @classmethod
    def zeros(cls, p: int, m: int) -> "DualState":
        return cls(np.zeros(p), np.zeros(m), np.zeros(m))

    def validate(self):
        for name in ("lam", "mu_plus", "mu_minus"):
            v = getattr(self, name)
            if np.any(~np.isfinite(v)) or np.any(v < 0):
                raise InvalidState(f"dual block {name} must be finite and non-negative")
        if self.mu_plus.shape != self.mu_minus.shape:
            raise InvalidState("mu_plus and mu_minus must have the same length")

    @property
    def norm(self) -> float:
        return math.sqrt(
            float(self.lam @ self.lam + self.mu_plus @ self.mu_plus + self.mu_minus @ self.mu_minus)
        )

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.lam, self.mu_plus, self.mu_minus])


@dataclass(frozen=True)
class QuadModelSet:
    anchor: np.ndarray
    F: float
    grad_F: np.ndarray
    curv0: float
    G: np.ndarray
    jac_G: np.ndarray
    curv_G: np.ndarray
    H: np.ndarray
    jac_H: np.ndarray
    curv_H: np.ndarray

    @property
    def p(self) -> int:
        return self.G.size

    @property
    def m(self) -> int:
        return self.H.size

    def constraint_rows(self):
        """Stack (G, H, -H) models: values (k,), Jacobian (k, n), curvatures (k,)."""
        values = np.concatenate([self.G, self.H, -self.H])
        jac = np.vstack([self.jac_G, self.jac_H, -self.jac_H])
        curv = np.concatenate([self.curv_G, self.curv_H, self.curv_H])
        return values, jac, curv


def build_models(
    record: SampleRecord,
    anchor,
    L_g,
    L_h,
    duals: DualState,
    tau: float,
) -> QuadModelSet:
    """Assemble the surrogate models at ``anchor``.

    The objective curvature is tau plus the dual-weighted constraint moduli,
    hence never below tau.
    """
    anchor = np.asarray(anchor, dtype=float)
    L_g = np.asarray(L_g, dtype=float)
    L_h = np.asarray(L_h, dtype=float)
    if not tau > 0:
        raise InvalidArgument("tau must be positive")
    if np.any(L_g < 0) or np.any(L_h < 0):
        raise PreconditionViolation("weak-convexity moduli must be non-negative")
    duals.validate()
    if duals.lam.size != L_g.size or duals.mu_plus.size != L_h.size:
        raise InvalidArgument("dual sizes disagree with the constraint moduli")
    if record.G.size != L_g.size or record.H.size != L_h.size or record.grad_F.size != anchor.size:
        raise InvalidArgument("sample record sizes disagree with the models")

    curv_G = -L_g
    curv_H = -L_h
    curv0 = tau - float(duals.lam @ curv_G) - float((duals.mu_plus + duals.mu_minus) @ curv_H)
    return QuadModelSet(
        anchor=anchor,
        F=float(record.F),
        grad_F=np.asarray(record.grad_F, float),
        curv0=curv0,
        G=np.asarray(record.G, float),
        jac_G=np.asarray(record.jac_G, float).reshape(L_g.size, anchor.size),
        curv_G=curv_G,
        H=np.asarray(record.H, float),
        jac_H=np.asarray(record.jac_H, float).reshape(L_h.size, anchor.size),
        curv_H=curv_H,
    )


def eval_models(models: QuadModelSet, x):
    """Return (q0, qG, qH_plus, qH_minus) at ``x``."""
    d = np.asarray(x, dtype=float) - models.anchor
    half_sq = 0.5 * float(d @ d)
    q0 = models.F + float(models.grad_F @ d) + models.curv0 * half_sq
    qG = models.G + models.jac_G @ d + models.curv_G * half_sq
    lin_H = models.H + models.jac_H @ d
    qH_plus = lin_H + models.curv_H * half_sq
    qH_minus = -lin_H + models.curv_H * half_sq
    return q0, qG, qH_plus, qH_minus


@dataclass(frozen=True)
class DerivedConstants:
    C_qH: float
    C_G: float
    C_H: float
    kappa_sigma: float
    L_max: float
    nu_max: float
    kappa_gh: float
    gamma_sigma: float
    gamma_2g: float
    gamma_2h: float
    Gamma_Delta: float
    u_max: float


def derived_constants(
    program: StochasticProgram,
    sigma_g: float,
    sigma_h: float,
    D0: float | None = None,
    u_max: float | None = None,
) -> DerivedConstants:
    """Constants built from the declared ones and the dual step sizes.

    ``u_max`` bounds the slack sup-norm along a run. When omitted the a
    priori value 4 * C_qH is used; callers holding a trajectory should pass
    the observed value and check it against that bound separately.
    """
    if sigma_g <= 0 or sigma_h <= 0:
        raise PreconditionViolation("dual step sizes must be positive")
    c = program.constants
    p, m = program.p, program.m
    D0 = program.diameter if D0 is None else float(D0)
    if D0 <= 0:
        raise PreconditionViolation("diameter must be positive")

    k_sig = c.L_max
    C_qH = c.nu_h + c.kappa_h * D0 + 0.5 * k_sig * D0**2
    C_G = c.kappa_g + 0.5 * k_sig * D0
    C_H = c.kappa_h + 0.5 * k_sig * D0
    gamma_sigma = math.sqrt(sigma_g**2 * c.nu_g**2 + 2 * sigma_h**2 * c.nu_h**2)
    u_max = 4.0 * C_qH if u_max is None else float(u_max)
    gamma_2g = c.nu_g + c.kappa_g * D0 + 0.5 * k_sig * D0**2
    gamma_2h = c.nu_h + c.kappa_h * D0 + 0.5 * k_sig * D0**2 + u_max
    Gamma_Delta = p * sigma_g * gamma_2g * (c.kappa_g + k_sig * D0) + 2 * m * sigma_h * gamma_2h * (
        c.kappa_h + k_sig * D0
    )
    return DerivedConstants(
        C_qH=C_qH,
        C_G=C_G,
        C_H=C_H,
        kappa_sigma=k_sig,
        L_max=k_sig,
        nu_max=max(c.nu_g, c.nu_h),
        kappa_gh=math.sqrt(p + 2 * m) * max(c.kappa_g, c.kappa_h),
        gamma_sigma=gamma_sigma,
        gamma_2g=gamma_2g,
        gamma_2h=gamma_2h,
        Gamma_Delta=Gamma_Delta,
        u_max=u_max,
    )
