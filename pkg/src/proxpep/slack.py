"""Closed-form minimizer of the scalar slack problem.

    min_{u >= 0}  beta*u + [a - sigma*u]_+^2 / (2 sigma)
                         + [b - sigma*u]_+^2 / (2 sigma) + kappa (u - v)^2 / 2

The derivative beta - [a - sigma u]_+ - [b - sigma u]_+ + kappa (u - v) is
piecewise linear and strictly increasing, with kinks at a/sigma and b/sigma.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

REGIONS = ("both_relu_active", "one_active", "none_active", "boundary")


@dataclass(frozen=True)
class SlackProxResult:
    u_star: float
    descent: float
    active_region: str


def _check(beta, sigma, kappa, v):
    if not (beta > 0 and sigma > 0 and kappa > 0):
        raise InvalidArgument("beta, sigma and kappa must be positive")
    if not v >= 0:
        raise InvalidArgument("the prox centre v must be non-negative")


def slack_objective(u, a, b, beta, sigma, kappa, v):
    ra = max(a - sigma * u, 0.0)
    rb = max(b - sigma * u, 0.0)
    return beta * u + (ra * ra + rb * rb) / (2 * sigma) + 0.5 * kappa * (u - v) ** 2


def slack_derivative(u, a, b, beta, sigma, kappa, v):
    return beta - max(a - sigma * u, 0.0) - max(b - sigma * u, 0.0) + kappa * (u - v)


def slack_prox(a: float, b: float, beta: float, sigma: float, kappa: float, v: float) -> SlackProxResult:
    """Exact minimizer with the region it was found in."""
    a, b, beta, sigma, kappa, v = map(float, (a, b, beta, sigma, kappa, v))
    _check(beta, sigma, kappa, v)

    if slack_derivative(0.0, a, b, beta, sigma, kappa, v) >= 0:
        return SlackProxResult(0.0, v, "boundary")

    # stationary point of each smooth piece, keep the ones consistent with it
    pieces = (
        ("both_relu_active", (a, b), ()),
        ("one_active", (a,), (b,)),
        ("one_active", (b,), (a,)),
        ("none_active", (), (a, b)),
    )
    best = None
    fallback = None
    for region, active, inactive in pieces:
        u = (kappa * v + sum(active) - beta) / (kappa + len(active) * sigma)
        if u <= 0:
            continue
        value = slack_objective(u, a, b, beta, sigma, kappa, v)
        consistent = all(s - sigma * u > 0 for s in active) and all(s - sigma * u <= 0 for s in inactive)
        if fallback is None or value < fallback[0]:
            fallback = (value, u, region)
        if consistent and (best is None or value < best[0]):
            best = (value, u, region)
    chosen = best or fallback
    if chosen is None:  # every piece pointed below zero: only reachable through rounding
        return SlackProxResult(0.0, v, "boundary")
    _, u, region = chosen
    return SlackProxResult(u, v - u, region)


def slack_prox_vec(a, b, beta, sigma, kappa, v):
    """Vectorized minimizer over arrays ``a``, ``b``, ``v``.

    Locates the kink interval containing the root of the derivative, solves
    the linear piece there, and returns exact zeros whenever the derivative
    at zero is non-negative.
    """
    hi = np.maximum(a, b)
    lo = np.minimum(a, b)
    # derivative at the upper kink (nothing active there) and the lower kink
    d_hi = beta + kappa * (hi / sigma - v)
    d_lo = beta - (hi - lo) + kappa * (lo / sigma - v)
    u_none = v - beta / kappa
    u_one = (kappa * v + hi - beta) / (kappa + sigma)
    u_both = (kappa * v + hi + lo - beta) / (kappa + 2 * sigma)
    root = np.where(d_hi <= 0, u_none, np.where(d_lo <= 0, u_one, u_both))
    at_zero = beta - np.maximum(a, 0.0) - np.maximum(b, 0.0) - kappa * v
    return np.where(at_zero >= 0, 0.0, np.maximum(root, 0.0))


@dataclass(frozen=True)
class ShrinkageBounds:
    lower: float | None
    upper: float
    refined_upper: float


def shrinkage_bounds(a: float, b: float, beta: float, sigma: float, kappa: float, v: float) -> ShrinkageBounds:
    """Bounds on the descent v - u_star and an upper bound on u_star.

    ``lower`` is only defined when |a| + |b| <= beta.
    """
    a, b, beta, sigma, kappa, v = map(float, (a, b, beta, sigma, kappa, v))
    _check(beta, sigma, kappa, v)
    mass = abs(a) + abs(b)
    lower = min(v, (beta - mass) / kappa) if mass <= beta else None
    upper = min(v, beta / kappa)
    delta = max(0.0, mass - beta)
    refined = v + (delta - 2 * sigma * v) / (kappa + 2 * sigma)
    return ShrinkageBounds(lower, upper, refined)
