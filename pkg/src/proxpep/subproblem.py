"""Joint proximal subproblem over the feasible set times the slack orthant.

For fixed x the objective separates over the slacks, and each slack has the
closed-form minimizer in :mod:`proxpep.slack`. The solver therefore runs an
accelerated projected gradient method (backtracking, adaptive restart) on
the reduced function x -> min_u objective(x, u) and reads u off exactly.
This keeps the well-conditioned x-block apart from the u-block whose
curvature alpha + c is orders of magnitude larger, and gives bit-exact
zero slacks whenever the boundary test of the slack problem holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, PreconditionViolation, UnsupportedSize
from .models import DualState, QuadModelSet, eval_models
from .optim import apg
from .problem import Ball, ConvexFeasibleSet
from .slack import slack_prox_vec


@dataclass(frozen=True)
class SubproblemInstance:
    models: QuadModelSet
    duals: DualState
    x_prev: np.ndarray
    u_prev: np.ndarray
    sigma_g: float
    sigma_h: float
    alpha: float
    c: float
    beta: float
    feasible_set: ConvexFeasibleSet

    def __post_init__(self):
        if not (self.sigma_g > 0 and self.sigma_h > 0 and self.alpha > 0 and self.c >= 0):
            raise PreconditionViolation("sigma_g, sigma_h, alpha must be positive and c non-negative")
        if self.beta < 0:
            raise PreconditionViolation("penalty parameter must be non-negative")
        n, m = self.models.anchor.size, self.models.m
        if self.x_prev.shape != (n,) or self.u_prev.shape != (m,):
            raise InvalidArgument("previous primal state has the wrong shape")
        if np.any(self.u_prev < 0):
            raise PreconditionViolation("previous slacks must be non-negative")
        if self.duals.lam.size != self.models.p or self.duals.mu_plus.size != m:
            raise InvalidArgument("dual sizes disagree with the models")

    @property
    def kappa_u(self) -> float:
        return self.alpha + self.c


@dataclass(frozen=True)
class SubproblemSolution:
    x_next: np.ndarray
    u_next: np.ndarray
    objective: float
    prox_grad_norm: float
    iterations: int


def _penalty(y, sigma, arg):
    # ([arg]_+^2 - y^2) / (2 sigma), written as a product to keep precision
    w = np.maximum(arg, 0.0)
    return (w - y) * (w + y) / (2 * sigma)


def objective(inst: SubproblemInstance, x, u) -> float:
    """Augmented model Lagrangian plus both proximal terms at (x, u)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != inst.x_prev.shape or u.shape != inst.u_prev.shape:
        raise InvalidArgument("dimension mismatch in objective")
    if np.any(u < 0):
        raise PreconditionViolation("slacks must be non-negative")
    q0, qG, qHp, qHm = eval_models(inst.models, x)
    y = inst.duals
    sg, sh = inst.sigma_g, inst.sigma_h
    total = q0 + inst.beta * float(u.sum())
    total += float(_penalty(y.lam, sg, y.lam + sg * qG).sum())
    total += float(_penalty(y.mu_plus, sh, y.mu_plus + sh * (qHp - u)).sum())
    total += float(_penalty(y.mu_minus, sh, y.mu_minus + sh * (qHm - u)).sum())
    dx = x - inst.x_prev
    du = u - inst.u_prev
    total += 0.5 * inst.alpha * float(dx @ dx) + 0.5 * inst.kappa_u * float(du @ du)
    return total


def objective_batch(inst: SubproblemInstance, X: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Objective at N points: X is (N, n), U is (N, m)."""
    md = inst.models
    D = X - md.anchor
    half_sq = 0.5 * np.sum(D * D, axis=1)
    q0 = md.F + D @ md.grad_F + md.curv0 * half_sq
    qG = md.G + D @ md.jac_G.T + np.outer(half_sq, md.curv_G)
    lin = md.H + D @ md.jac_H.T
    qHp = lin + np.outer(half_sq, md.curv_H)
    qHm = -lin + np.outer(half_sq, md.curv_H)
    y = inst.duals
    sg, sh = inst.sigma_g, inst.sigma_h
    total = q0 + inst.beta * U.sum(axis=1)
    total += _penalty(y.lam, sg, y.lam + sg * qG).sum(axis=1)
    total += _penalty(y.mu_plus, sh, y.mu_plus + sh * (qHp - U)).sum(axis=1)
    total += _penalty(y.mu_minus, sh, y.mu_minus + sh * (qHm - U)).sum(axis=1)
    dx = X - inst.x_prev
    du = U - inst.u_prev
    total += 0.5 * inst.alpha * np.sum(dx * dx, axis=1) + 0.5 * inst.kappa_u * np.sum(du * du, axis=1)
    return total


def dual_feedback(inst: SubproblemInstance, x):
    """Pre-update arguments (a, b) of the two equality multipliers at x."""
    _, _, qHp, qHm = eval_models(inst.models, x)
    sh = inst.sigma_h
    return inst.duals.mu_plus + sh * qHp, inst.duals.mu_minus + sh * qHm


class _Reduced:
    """x -> min_u objective(x, u), with its gradient and the minimizing u."""

    def __init__(self, inst: SubproblemInstance):
        md = inst.models
        self.inst = inst
        self.p, self.m = md.p, md.m
        self.anchor = md.anchor
        self.values, self.jac, self.curv = md.constraint_rows()
        self.y = inst.duals.stacked()
        self.sig = np.concatenate([np.full(self.p, inst.sigma_g), np.full(2 * self.m, inst.sigma_h)])
        self.lin_F = md.grad_F
        self.quad = md.curv0 + inst.alpha
        self.shift = inst.x_prev - md.anchor  # zero when anchored at the prox centre
        self.alpha = inst.alpha

    def __call__(self, x):
        inst, p, m = self.inst, self.p, self.m
        d = x - self.anchor
        half_sq = 0.5 * float(d @ d)
        q = self.values + self.jac @ d + self.curv * half_sq
        arg = self.y + self.sig * q
        if m:
            sh = inst.sigma_h
            u = slack_prox_vec(arg[p : p + m], arg[p + m :], inst.beta, sh, inst.kappa_u, inst.u_prev)
            arg[p:] -= sh * np.concatenate([u, u])
        else:
            u = inst.u_prev[:0]
        w = np.maximum(arg, 0.0)
        e = d - self.shift
        value = (
            float(self.lin_F @ d)
            + inst.models.curv0 * half_sq
            + 0.5 * self.alpha * float(e @ e)
            + inst.beta * float(u.sum())
            + float(((w - self.y) * (w + self.y) / (2 * self.sig)).sum())
        )
        if m:
            du = u - inst.u_prev
            value += 0.5 * inst.kappa_u * float(du @ du)
        grad = self.lin_F + inst.models.curv0 * d + self.alpha * e + self.jac.T @ w + float(self.curv @ w) * d
        return value, grad, u

    def lipschitz_estimate(self) -> float:
        inst, p = self.inst, self.p
        row_sq = np.sum(self.jac * self.jac, axis=1)
        est = self.quad + inst.sigma_g * float(row_sq[:p].sum()) + inst.sigma_h * float((row_sq[p:] + 1.0).sum())
        return max(est, 1e-12)


def solve(inst: SubproblemInstance, tol: float = 1e-8, max_iters: int = 500) -> SubproblemSolution:
    """Minimize the subproblem to a projected-gradient residual below ``tol``.

    The residual is L * |x - P(x - grad/L)| at the returned point, with L the
    accepted backtracking constant; the slack block is solved exactly, so
    its own residual is zero.
    """
    if not tol > 0:
        raise InvalidArgument("tol must be positive")
    f = _Reduced(inst)
    out = apg(f, inst.x_prev, inst.feasible_set.project, f.lipschitz_estimate(), tol, max_iters)
    return SubproblemSolution(out.x, out.extra, out.value + inst.models.F, out.residual, out.iterations)


def brute_force(inst: SubproblemInstance, grid_step: float, C_qH: float | None = None, points_per_axis: int = 41) -> SubproblemSolution:
    """Grid minimization over the feasible set times [0, u_cap]^m.

    A full grid at ``grid_step`` is out of reach even in three dimensions,
    so the search starts on a coarse grid spanning the whole domain and
    repeatedly zooms onto a window of +-3 cells around the incumbent until
    the cell width drops to ``grid_step``. For the convex objective this
    tracks the minimizer to within the final cell size. No gradient,
    model or slack-prox machinery is shared with :func:`solve`.
    """
    n, m = inst.x_prev.size, inst.u_prev.size
    if n > 2 or m > 1:
        raise UnsupportedSize("brute force handles n <= 2 and m <= 1 only")
    if not grid_step > 0:
        raise InvalidArgument("grid_step must be positive")

    fs = inst.feasible_set
    if isinstance(fs, Ball):
        lo = fs.center - fs.radius
        hi = fs.center + fs.radius
    else:
        lo, hi = fs.lower.copy(), fs.upper.copy()
    if m:
        md = inst.models
        if C_qH is None:
            C_qH = float(np.max(np.abs(md.H) + np.linalg.norm(md.jac_H, axis=1) * fs.diameter))
        y = inst.duals
        push = inst.beta + float(y.mu_plus.sum() + y.mu_minus.sum()) + 2 * inst.sigma_h * C_qH
        u_cap = float(inst.u_prev.max()) + push / inst.kappa_u + 1.0
        lo = np.append(lo, 0.0)
        hi = np.append(hi, u_cap)
    dim = n + m

    def snap(points):
        # grid points outside a ball are moved radially onto it so the
        # curved boundary is covered as densely as the interior
        if isinstance(fs, Ball):
            offset = points[:, :n] - fs.center
            norms = np.linalg.norm(offset, axis=1, keepdims=True)
            scale = np.minimum(1.0, fs.radius / np.maximum(norms, 1e-300))
            points = points.copy()
            points[:, :n] = fs.center + offset * scale
        return points

    win_lo, win_hi = lo.copy(), hi.copy()
    k = points_per_axis
    while True:
        axes = [np.linspace(win_lo[i], win_hi[i], k) for i in range(dim)]
        mesh = snap(np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim))
        values = objective_batch(inst, mesh[:, :n], mesh[:, n:])
        idx = int(np.argmin(values))
        best = mesh[idx]
        cell = (win_hi - win_lo) / (k - 1)
        if np.all(cell <= grid_step):
            break
        win_lo = np.maximum(lo, best - 3 * cell)
        win_hi = np.minimum(hi, best + 3 * cell)
        span = float(np.max(win_hi - win_lo))
        k = int(min(points_per_axis, max(3, math.ceil(span / grid_step) + 1)))

    x, u = best[:n].copy(), best[n:].copy()
    return SubproblemSolution(x, u, float(values[idx]), float("nan"), 0)
