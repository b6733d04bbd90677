"""Independent reference computations used as test oracles.

None of these share code paths with the package implementations they are
compared against: they use grids, bisection, finite differences,
quadrature or plain loops.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate

def slack_objective_vec(u, a, b, beta, sigma, kappa, v):
    ra = np.maximum(a - sigma * u, 0.0)
    rb = np.maximum(b - sigma * u, 0.0)
    return beta * u + (ra * ra + rb * rb) / (2 * sigma) + 0.5 * kappa * (u - v) ** 2


def slack_grid_oracle(a, b, beta, sigma, kappa, v, points=2001, refine=80):
    """Grid search on [0, v + beta/kappa + (|a|+|b|)/sigma + 1], then bisection.

    The bisection runs on the sign of the one-sided slope inside the winning
    grid bracket; comparing objective values instead stalls near 1e-6 when
    kappa is small and the objective is flat. Arrays of parameters are
    handled elementwise.
    """
    a, b, beta, sigma, kappa, v = np.broadcast_arrays(*(np.asarray(z, float) for z in (a, b, beta, sigma, kappa, v)))
    hi = v + beta / kappa + (np.abs(a) + np.abs(b)) / sigma + 1.0
    grid = np.linspace(0.0, 1.0, points)[None, :] * hi[..., None]
    vals = slack_objective_vec(grid, a[..., None], b[..., None], beta[..., None], sigma[..., None], kappa[..., None], v[..., None])
    idx = np.argmin(vals, axis=-1)
    step = hi / (points - 1)
    lo = np.maximum(idx * step - step, 0.0)
    up = np.minimum(idx * step + step, hi)

    def slope(u):
        return beta - np.maximum(a - sigma * u, 0.0) - np.maximum(b - sigma * u, 0.0) + kappa * (u - v)

    for _ in range(refine):
        mid = 0.5 * (lo + up)
        rising = slope(mid) >= 0
        up = np.where(rising, mid, up)
        lo = np.where(rising, lo, mid)
    # minimizer sits on the boundary when the slope is already non-negative there
    return np.where((lo == 0.0) & (slope(np.zeros_like(lo)) >= 0), 0.0, 0.5 * (lo + up))


def central_difference(fun, x, h=1e-6):
    x = np.asarray(x, float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return grad


def upper_gamma_quadrature(a, x=1.0):
    value, _ = integrate.quad(lambda s: s ** (a - 1) * math.exp(-s), x, math.inf, epsabs=1e-13, epsrel=1e-13)
    return value


def lagrangian_loop(program, x, lam, mu_plus, mu_minus):
    """L(x, y) written out term by term from the deterministic oracle."""
    e = program.deterministic_oracle(np.asarray(x, float))
    total = float(e.f)
    for i in range(program.p):
        total += lam[i] * e.g[i]
    for j in range(program.m):
        total += (mu_plus[j] - mu_minus[j]) * e.h[j]
    return total


def subproblem_objective_loop(inst, x, u):
    """Term-by-term evaluation of the augmented model Lagrangian plus proximal terms."""
    md, y = inst.models, inst.duals
    x = np.asarray(x, float)
    d = x - md.anchor
    r2 = float(sum(di * di for di in d))
    total = md.F + float(sum(g * di for g, di in zip(md.grad_F, d))) + 0.5 * md.curv0 * r2
    total += inst.beta * float(sum(u))
    for i in range(md.p):
        q = md.G[i] + float(md.jac_G[i] @ d) + 0.5 * md.curv_G[i] * r2
        total += (max(y.lam[i] + inst.sigma_g * q, 0.0) ** 2 - y.lam[i] ** 2) / (2 * inst.sigma_g)
    for j in range(md.m):
        lin = md.H[j] + float(md.jac_H[j] @ d)
        for mult, sign in ((y.mu_plus[j], 1.0), (y.mu_minus[j], -1.0)):
            q = sign * lin + 0.5 * md.curv_H[j] * r2
            total += (max(mult + inst.sigma_h * (q - u[j]), 0.0) ** 2 - mult**2) / (2 * inst.sigma_h)
    total += 0.5 * inst.alpha * float(np.sum((x - inst.x_prev) ** 2))
    total += 0.5 * (inst.alpha + inst.c) * float(np.sum((np.asarray(u) - inst.u_prev) ** 2))
    return total


def zoom_grid_argmin(fun, lower, upper, target_step=1e-6, points=61):
    """Minimise a convex function on a box by repeated grid zooming (2-D or less)."""
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    lo, hi = lower.copy(), upper.copy()
    while True:
        axes = [np.linspace(lo[i], hi[i], points) for i in range(lo.size)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.size)
        vals = np.array([fun(z) for z in mesh])
        best = mesh[int(np.argmin(vals))]
        cell = (hi - lo) / (points - 1)
        if np.all(cell <= target_step):
            return best
        lo = np.maximum(lower, best - 2 * cell)
        hi = np.minimum(upper, best + 2 * cell)
