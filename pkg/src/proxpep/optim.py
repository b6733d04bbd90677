"""Accelerated projected gradient with backtracking and adaptive restart."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .errors import ConvergenceFailure


@dataclass
class APGResult:
    x: np.ndarray
    value: float
    extra: Any
    residual: float
    iterations: int
    lipschitz: float


def projected_residual(x, grad, project, L) -> float:
    """L * |x - P(x - grad / L)|, the scaled fixed-point residual."""
    return L * float(np.linalg.norm(x - project(x - grad / L)))


def apg(
    fun: Callable[[np.ndarray], tuple],
    x0: np.ndarray,
    project: Callable[[np.ndarray], np.ndarray],
    lipschitz: float,
    tol: float,
    max_iters: int,
) -> APGResult:
    """Minimize a smooth convex ``fun`` over a set with a cheap projection.

    ``fun(x)`` returns ``(value, gradient, extra)``; ``extra`` is carried
    along with the returned point. The residual is checked at every accepted
    iterate, so the returned point itself satisfies the tolerance.
    """
    L = max(float(lipschitz), 1e-12)
    x = project(np.asarray(x0, dtype=float))
    fx, gx, ex = fun(x)
    residual = projected_residual(x, gx, project, L)
    if residual <= tol:
        return APGResult(x, fx, ex, residual, 0, L)

    best = (residual, x, fx, ex)
    y, fy, gy = x, fx, gx
    t = 1.0
    for k in range(1, max_iters + 1):
        while True:
            x_new = project(y - gy / L)
            f_new, g_new, e_new = fun(x_new)
            step = x_new - y
            if f_new <= fy + float(gy @ step) + 0.5 * L * float(step @ step) + 1e-13 * (1.0 + abs(fy)):
                break
            L *= 2.0
            if L > 1e30:
                raise ConvergenceFailure("backtracking diverged", best=(best[1], best[3]), residual=best[0])

        residual = projected_residual(x_new, g_new, project, L)
        if residual < best[0]:
            best = (residual, x_new, f_new, e_new)
        if residual <= tol:
            return APGResult(x_new, f_new, e_new, residual, k, L)

        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        if float((y - x_new) @ (x_new - x)) > 0:  # momentum points uphill: restart
            t, t_next = 1.0, 1.0
        momentum = (t - 1.0) / t_next
        t = t_next
        if momentum == 0.0:
            y, fy, gy = x_new, f_new, g_new
        else:
            y = x_new + momentum * (x_new - x)
            fy, gy, _ = fun(y)
        x = x_new

    raise ConvergenceFailure(
        f"residual {best[0]:.3g} above tol {tol:.3g} after {max_iters} iterations",
        best=(best[1], best[3]),
        residual=best[0],
    )
