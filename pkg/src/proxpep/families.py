"""Seeded synthetic problem families with analytically known constants.

``quad-trig``
    f = convex quadratic + small cosine ripple, g_i = convex quadratic
    minus a margin, h_j = affine + small sine ripple, on a centred box.
``affine-eq``
    f = convex quadratic with an interior minimizer, h_j affine, no g.

Noise is a random affine perturbation s * (z0 + <z, x>) added to each
function, with z uniform on [-sqrt(3), sqrt(3)]. Values and gradients stay
consistent (every F(., xi) is a genuine function), the noise is bounded and
has mean zero, and the weak-convexity moduli are unaffected.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import GenerationError, InvalidArgument
from .problem import Box, ExpectedRecord, ProgramConstants, SampleRecord, StochasticProgram

FAMILIES = ("quad-trig", "affine-eq")
NOISE_BOUND = math.sqrt(3.0)


def noise_generator(xi_seed: int) -> np.random.Generator:
    """Counter-based stream keyed by a single integer."""
    return np.random.Generator(np.random.Philox(key=int(xi_seed)))


class _Family:
    """Shared noise model; subclasses provide the expected functions."""

    def __init__(self, n, p, m, noise_scale):
        self.n, self.p, self.m = n, p, m
        self.noise_scale = float(noise_scale)

    def draw_noise(self, xi_seed: int) -> np.ndarray:
        """Rows: F, G_1..G_p, H_1..H_m; columns: value offset, gradient."""
        rng = noise_generator(xi_seed)
        z = rng.uniform(-NOISE_BOUND, NOISE_BOUND, size=(1 + self.p + self.m, 1 + self.n))
        return self.noise_scale * z

    def noise_value_bound(self, radius_l1: float) -> float:
        return self.noise_scale * NOISE_BOUND * (1.0 + radius_l1)

    def noise_grad_bound(self) -> float:
        return self.noise_scale * NOISE_BOUND * math.sqrt(self.n)

    def expected(self, x) -> ExpectedRecord:
        raise NotImplementedError

    def sampled(self, x, noise: np.ndarray, xi_id: int = -1) -> SampleRecord:
        e = self.expected(x)
        offsets = noise[:, 0] + noise[:, 1:] @ x
        p = self.p
        return SampleRecord(
            F=float(e.f + offsets[0]),
            grad_F=e.grad_f + noise[0, 1:],
            G=e.g + offsets[1 : 1 + p],
            jac_G=e.jac_g + noise[1 : 1 + p, 1:],
            H=e.h + offsets[1 + p :],
            jac_H=e.jac_h + noise[1 + p :, 1:],
            xi_id=xi_id,
        )

    def sample(self, x, xi_seed: int) -> SampleRecord:
        return self.sampled(x, self.draw_noise(xi_seed), xi_seed)

    def sampled_values_batch(self, x, noises: np.ndarray):
        """(F, G, H) values for a stack of noise draws at one point."""
        e = self.expected(x)
        offsets = noises[..., 0] + noises[..., 1:] @ x
        p = self.p
        return (
            e.f + offsets[:, 0],
            e.g + offsets[:, 1 : 1 + p],
            e.h + offsets[:, 1 + p :],
        )


class QuadTrig(_Family):
    def __init__(self, n, p, m, noise_scale, rng, half_width, margin, ripple, curvature):
        super().__init__(n, p, m, noise_scale)
        r = half_width
        self.x_tilde = rng.uniform(-r / 4, r / 4, size=n)

        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        self.A = (q * rng.uniform(0.5, 2.0, size=n)) @ q.T
        direction = rng.standard_normal(n)
        direction /= np.linalg.norm(direction)
        self.x_f = self.x_tilde + 0.8 * r * math.sqrt(n) * direction
        self.W = rng.standard_normal((2, n)) / math.sqrt(n)
        self.phase_f = rng.uniform(0, 2 * math.pi, size=2)
        self.ripple = ripple

        self.B = rng.uniform(0.5, 1.5, size=(p, n))
        self.C = self.x_tilde + rng.uniform(-r / 4, r / 4, size=(p, n))
        self.rho = 0.5 * np.sum(self.B * (self.x_tilde - self.C) ** 2, axis=1) + margin

        a = rng.standard_normal((m, n))
        self.a = a / np.linalg.norm(a, axis=1, keepdims=True) if m else a
        v = rng.standard_normal((m, n))
        self.V = v / np.linalg.norm(v, axis=1, keepdims=True) if m else v
        self.phase_h = rng.uniform(0, 2 * math.pi, size=m)
        self.curvature = curvature
        self.b = np.zeros(m)
        self.b = self._h(self.x_tilde)  # makes h(x_tilde) vanish exactly

    def _h(self, x):
        return self.a @ x + self.curvature * np.sin(self.V @ x + self.phase_h) - self.b

    def expected(self, x) -> ExpectedRecord:
        dx = x - self.x_f
        arg_f = self.W @ x + self.phase_f
        f = 0.5 * dx @ self.A @ dx + self.ripple * np.sum(np.cos(arg_f))
        grad_f = self.A @ dx - self.ripple * (np.sin(arg_f) @ self.W)
        dc = x - self.C
        g = 0.5 * np.sum(self.B * dc * dc, axis=1) - self.rho
        jac_g = self.B * dc
        arg_h = self.V @ x + self.phase_h
        h = self.a @ x + self.curvature * np.sin(arg_h) - self.b
        jac_h = self.a + (self.curvature * np.cos(arg_h))[:, None] * self.V
        return ExpectedRecord(float(f), grad_f, g, jac_g, h, jac_h)

    def constants(self, box: Box) -> ProgramConstants:
        n, r = self.n, box.upper[0]
        value_noise = self.noise_value_bound(n * r)
        grad_noise = self.noise_grad_bound()

        far_f = math.sqrt(np.sum((r + np.abs(self.x_f)) ** 2))
        kappa_f = np.linalg.norm(self.A, 2) * far_f + self.ripple * np.linalg.norm(self.W, axis=1).sum() + grad_noise
        L0 = self.ripple * np.sum(self.W**2)

        if self.p:
            spread = r + np.abs(self.C)
            q_max = 0.5 * np.sum(self.B * spread**2, axis=1)
            g_sup = np.maximum(self.rho, q_max - self.rho)
            nu_g = math.sqrt(np.sum((g_sup + value_noise) ** 2))
            kappa_g = np.linalg.norm(self.B * spread, axis=1).max() + grad_noise
        else:
            nu_g = kappa_g = 0.0

        if self.m:
            far_t = math.sqrt(np.sum((r + np.abs(self.x_tilde)) ** 2))
            slope = np.linalg.norm(self.a, axis=1) + self.curvature * np.linalg.norm(self.V, axis=1)
            nu_h = math.sqrt(np.sum((slope * far_t + value_noise) ** 2))
            kappa_h = slope.max() + grad_noise
        else:
            nu_h = kappa_h = 0.0

        eps0 = float(-self.expected(self.x_tilde).g.max()) if self.p else 1.0
        return ProgramConstants(
            L0=float(L0),
            L_g=np.full(self.p, self.curvature),
            L_h=self.curvature * np.sum(self.V**2, axis=1),
            kappa_f=float(kappa_f),
            kappa_g=float(kappa_g),
            kappa_h=float(kappa_h),
            nu_g=float(nu_g),
            nu_h=float(nu_h),
            rho_c=float(value_noise),
            x_tilde=self.x_tilde,
            eps0=eps0,
        )


class AffineEq(_Family):
    def __init__(self, n, p, m, noise_scale, rng, half_width):
        super().__init__(n, p, m, noise_scale)
        r = half_width
        self.x_tilde = rng.uniform(-r / 4, r / 4, size=n)
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        self.A = (q * rng.uniform(0.5, 2.0, size=n)) @ q.T
        self.x_f = rng.uniform(-r / 2, r / 2, size=n)
        a = rng.standard_normal((m, n))
        self.a = a / np.linalg.norm(a, axis=1, keepdims=True) if m else a
        self.b = self.a @ self.x_tilde

    @property
    def unconstrained_minimizer(self) -> np.ndarray:
        return self.x_f.copy()

    def expected(self, x) -> ExpectedRecord:
        dx = x - self.x_f
        return ExpectedRecord(
            float(0.5 * dx @ self.A @ dx),
            self.A @ dx,
            np.zeros(0),
            np.zeros((0, self.n)),
            self.a @ x - self.b,
            self.a.copy(),
        )

    def constants(self, box: Box) -> ProgramConstants:
        n, r = self.n, box.upper[0]
        value_noise = self.noise_value_bound(n * r)
        grad_noise = self.noise_grad_bound()
        far_f = math.sqrt(np.sum((r + np.abs(self.x_f)) ** 2))
        far_t = math.sqrt(np.sum((r + np.abs(self.x_tilde)) ** 2))
        nu_h = math.sqrt(self.m) * (far_t + value_noise) if self.m else 0.0
        return ProgramConstants(
            L0=0.0,
            L_g=np.zeros(0),
            L_h=np.zeros(self.m),
            kappa_f=float(np.linalg.norm(self.A, 2) * far_f + grad_noise),
            kappa_g=0.0,
            kappa_h=float(1.0 + grad_noise) if self.m else 0.0,
            nu_g=0.0,
            nu_h=float(nu_h),
            rho_c=float(value_noise),
            x_tilde=self.x_tilde,
            eps0=1.0,
        )


def generate_problem(
    family: str,
    n: int,
    p: int,
    m: int,
    noise_scale: float = 0.05,
    seed: int = 0,
    half_width: float = 0.5,
    margin: float = 0.1,
    ripple: float = 0.05,
    curvature: float | None = None,
) -> StochasticProgram:
    """Build a seeded instance of a synthetic family.

    ``curvature`` is the weak-convexity modulus given to the constraint
    ripples; by default it is chosen so that
    sqrt(p + 2m) * max modulus * diameter^2 is half of the Slater margin.
    """
    if family not in FAMILIES:
        raise InvalidArgument(f"unknown family {family!r}; choose from {FAMILIES}")
    if n < 1 or p < 0 or m < 0:
        raise InvalidArgument("need n >= 1 and p, m >= 0")
    if noise_scale < 0 or half_width <= 0 or margin <= 0:
        raise InvalidArgument("noise_scale must be >= 0, half_width and margin > 0")

    box = Box(np.full(n, -half_width), np.full(n, half_width))
    diameter_sq = box.diameter**2
    rng = np.random.default_rng(seed)
    source = {
        "family": family,
        "n": n,
        "p": p,
        "m": m,
        "noise_scale": float(noise_scale),
        "seed": int(seed),
        "half_width": float(half_width),
    }

    if family == "quad-trig":
        if curvature is None:
            curvature = min(0.01, 0.5 * margin / (math.sqrt(max(p + 2 * m, 1)) * diameter_sq))
        model = QuadTrig(n, p, m, noise_scale, rng, half_width, margin, ripple, curvature)
        source.update(margin=float(margin), ripple=float(ripple), curvature=float(curvature))
    else:
        if p != 0:
            raise InvalidArgument("the affine-eq family has no inequality constraints (p must be 0)")
        model = AffineEq(n, p, m, noise_scale, rng, half_width)

    constants = model.constants(box)
    if np.any(np.abs(model.x_tilde) > half_width):
        raise GenerationError("strictly feasible point fell outside the box")
    gate = math.sqrt(p + 2 * m) * constants.L_max * diameter_sq
    if gate > constants.eps0:
        raise GenerationError(
            f"curvature {constants.L_max:.3g} too large for the Slater margin: "
            f"sqrt(p+2m)*L_max*D0^2 = {gate:.3g} > eps0 = {constants.eps0:.3g}"
        )
    if not np.isfinite(constants.kappa_f):
        raise GenerationError("non-finite constant produced")

    return StochasticProgram(
        feasible_set=box,
        n=n,
        p=p,
        m=m,
        sample_oracle=model.sample,
        deterministic_oracle=model.expected,
        constants=constants,
        source=source,
        family=model,
    )
