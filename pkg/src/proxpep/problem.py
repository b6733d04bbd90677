"""Stochastic program container, feasible sets and assumption checks.

A program bundles a compact convex set, a sampled oracle returning the
values and gradients of F(., xi), G_i(., xi), H_j(., xi) at a point, the
matching deterministic (expected) oracle, and the declared constants that
every step-size and threshold formula downstream is built from.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Any, Callable

import numpy as np

from .errors import InvalidArgument, PreconditionViolation

MEMBERSHIP_TOL = 1e-10


# ---------------------------------------------------------------------------
# feasible sets


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray
    kind: str = field(default="box", init=False)

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape or lo.size == 0:
            raise InvalidArgument("box bounds must be non-empty vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise InvalidArgument("box bounds must be finite (the set has to be compact)")
        if np.any(lo > hi):
            raise InvalidArgument("box is empty: some lower bound exceeds its upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def project(self, x: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(x, self.lower), self.upper)

    def distance(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(x - self.project(x)))

    def inflate(self, amount: float) -> "Box":
        return Box(self.lower - amount, self.upper + amount)

    def random_points(self, rng: np.random.Generator, k: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(k, self.dim))

    def to_dict(self) -> dict:
        return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float
    kind: str = field(default="ball", init=False)

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(-1)
        if c.size == 0 or not np.all(np.isfinite(c)):
            raise InvalidArgument("ball center must be a finite non-empty vector")
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise InvalidArgument("ball radius must be a positive finite number")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def project(self, x: np.ndarray) -> np.ndarray:
        offset = x - self.center
        norm = np.linalg.norm(offset)
        if norm <= self.radius:
            return np.array(x, dtype=float)
        return self.center + offset * (self.radius / norm)

    def distance(self, x: np.ndarray) -> float:
        return max(0.0, float(np.linalg.norm(x - self.center)) - self.radius)

    def inflate(self, amount: float) -> "Ball":
        return Ball(self.center, self.radius + amount)

    def random_points(self, rng: np.random.Generator, k: int) -> np.ndarray:
        direction = rng.standard_normal((k, self.dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radii = self.radius * rng.uniform(size=(k, 1)) ** (1.0 / self.dim)
        return self.center + radii * direction

    def to_dict(self) -> dict:
        return {"kind": "ball", "center": self.center.tolist(), "radius": self.radius}


ConvexFeasibleSet = Box | Ball


def feasible_set_from_dict(d: dict) -> ConvexFeasibleSet:
    kind = d.get("kind")
    if kind == "box":
        return Box(np.asarray(d["lower"], float), np.asarray(d["upper"], float))
    if kind == "ball":
        return Ball(np.asarray(d["center"], float), float(d["radius"]))
    raise InvalidArgument(f"unknown feasible set kind {kind!r}")


def project(x, feasible_set: ConvexFeasibleSet) -> np.ndarray:
    """Euclidean projection onto a box or ball."""
    x = np.asarray(x, dtype=float)
    if x.shape != (feasible_set.dim,):
        raise InvalidArgument(
            f"point has shape {x.shape}, set lives in dimension {feasible_set.dim}"
        )
    return feasible_set.project(x)


# ---------------------------------------------------------------------------
# oracle records


@dataclass(frozen=True)
class SampleRecord:
    """Values and gradients of the sampled functions at one point."""

    F: float
    grad_F: np.ndarray
    G: np.ndarray  # (p,)
    jac_G: np.ndarray  # (p, n)
    H: np.ndarray  # (m,)
    jac_H: np.ndarray  # (m, n)
    xi_id: int = -1


@dataclass(frozen=True)
class ExpectedRecord:
    """Values and gradients of f, g, h (the expectations) at one point."""

    f: float
    grad_f: np.ndarray
    g: np.ndarray
    jac_g: np.ndarray
    h: np.ndarray
    jac_h: np.ndarray


@dataclass(frozen=True)
class ProgramConstants:
    """Declared regularity constants of a stochastic program.

    Moduli are weak-convexity constants (``L0`` for F, ``L_g[i]`` for G_i,
    ``L_h[j]`` for both H_j and -H_j). ``nu_g`` and ``nu_h`` bound the
    Euclidean norm of the whole sampled constraint vectors G(x, xi) and
    H(x, xi) on the feasible set, which also bounds every component.
    ``kappa_*`` bound sampled gradient norms, ``rho_c`` is the sub-Gaussian
    scale of the constraint noise, and ``x_tilde``/``eps0`` describe a
    strictly feasible point with g(x_tilde) <= -eps0 and h(x_tilde) = 0.
    """

    L0: float
    L_g: np.ndarray
    L_h: np.ndarray
    kappa_f: float
    kappa_g: float
    kappa_h: float
    nu_g: float
    nu_h: float
    rho_c: float
    x_tilde: np.ndarray
    eps0: float

    def __post_init__(self):
        object.__setattr__(self, "L_g", np.asarray(self.L_g, float).reshape(-1))
        object.__setattr__(self, "L_h", np.asarray(self.L_h, float).reshape(-1))
        object.__setattr__(self, "x_tilde", np.asarray(self.x_tilde, float).reshape(-1))
        scalars = [self.L0, self.kappa_f, self.kappa_g, self.kappa_h, self.nu_g, self.nu_h, self.rho_c]
        if any((not np.isfinite(v)) or v < 0 for v in scalars):
            raise InvalidArgument("program constants must be finite and non-negative")
        if np.any(self.L_g < 0) or np.any(self.L_h < 0):
            raise InvalidArgument("weak-convexity moduli must be non-negative")
        if not (np.isfinite(self.eps0) and self.eps0 > 0):
            raise InvalidArgument("eps0 must be positive")

    @property
    def L_max(self) -> float:
        """Largest constraint modulus (the curvature scale of the models)."""
        moduli = np.concatenate([self.L_g, self.L_h])
        return float(moduli.max()) if moduli.size else 0.0

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.tolist() if isinstance(v, np.ndarray) else float(v)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ProgramConstants":
        return cls(**{f.name: d[f.name] for f in fields(cls)})


@dataclass
class StochasticProgram:
    """min E F(x, xi) s.t. E G(x, xi) <= 0, E H(x, xi) = 0, x in a convex set.

    ``sample_oracle(x, seed)`` must be a pure function of its arguments and
    ``deterministic_oracle(x)`` must return the exact expectations. The
    optional ``source`` dict records how the program was generated so it
    can be serialized and rebuilt.
    """

    feasible_set: ConvexFeasibleSet
    n: int
    p: int
    m: int
    sample_oracle: Callable[[np.ndarray, int], SampleRecord]
    deterministic_oracle: Callable[[np.ndarray], ExpectedRecord]
    constants: ProgramConstants
    source: dict | None = None
    family: Any = None

    def __post_init__(self):
        if self.n != self.feasible_set.dim:
            raise InvalidArgument("program dimension disagrees with its feasible set")
        if self.p < 0 or self.m < 0:
            raise InvalidArgument("constraint counts must be non-negative")
        c = self.constants
        if c.L_g.size != self.p or c.L_h.size != self.m or c.x_tilde.size != self.n:
            raise InvalidArgument("constant vectors do not match (n, p, m)")

    @property
    def diameter(self) -> float:
        return self.feasible_set.diameter


def sample(program: StochasticProgram, x, seed: int) -> SampleRecord:
    """Draw one sampled oracle record at ``x`` (deterministic in ``seed``)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (program.n,):
        raise InvalidArgument(f"point has shape {x.shape}, expected ({program.n},)")
    if program.feasible_set.distance(x) > MEMBERSHIP_TOL:
        raise PreconditionViolation("sample point lies outside the feasible set")
    return program.sample_oracle(x, int(seed))


# ---------------------------------------------------------------------------
# assumption checks


@dataclass
class ValidationReport:
    passed: bool
    failures: list[str]
    observed: dict[str, float]
    declared: dict[str, float]

    def __str__(self) -> str:
        lines = [f"passed={self.passed}"]
        for key in sorted(self.observed):
            lines.append(f"{key}: observed={self.observed[key]:.6g} declared={self.declared.get(key, float('nan')):.6g}")
        lines += [f"FAIL {msg}" for msg in self.failures]
        return "\n".join(lines)


def _midpoint_gap(values_a, values_b, values_mid, dist_sq, modulus):
    # phi + (L/2)|.|^2 convex  <=>  phi(mid) <= (phi(a)+phi(b))/2 + L|a-b|^2/8
    return values_mid - 0.5 * (values_a + values_b) - modulus * dist_sq / 8.0


def validate_assumptions(
    program: StochasticProgram,
    n_points: int = 100,
    n_seeds: int = 20,
    n_segments: int = 100,
    rng_seed: int = 0,
    inflate: float = 1e-6,
    tol: float = 1e-9,
) -> ValidationReport:
    """Spot-check declared constants against sampled behaviour.

    Points are drawn from the feasible set inflated by ``inflate``. The
    check is empirical: it can refute a declared constant, not prove it.
    """
    rng = np.random.default_rng(rng_seed)
    c = program.constants
    region = program.feasible_set.inflate(inflate)
    points = region.random_points(rng, n_points)
    seeds = rng.integers(0, 2**31, size=n_seeds)

    obs = {"kappa_f": 0.0, "kappa_g": 0.0, "kappa_h": 0.0, "nu_g": 0.0, "nu_h": 0.0, "rho_c": 0.0}
    for x in points:
        expected = program.deterministic_oracle(x)
        for s in seeds:
            rec = program.sample_oracle(x, int(s))
            obs["kappa_f"] = max(obs["kappa_f"], float(np.linalg.norm(rec.grad_F)))
            if program.p:
                obs["kappa_g"] = max(obs["kappa_g"], float(np.linalg.norm(rec.jac_G, axis=1).max()))
                obs["nu_g"] = max(obs["nu_g"], float(np.linalg.norm(rec.G)))
                obs["rho_c"] = max(obs["rho_c"], float(np.abs(rec.G - expected.g).max()))
            if program.m:
                obs["kappa_h"] = max(obs["kappa_h"], float(np.linalg.norm(rec.jac_H, axis=1).max()))
                obs["nu_h"] = max(obs["nu_h"], float(np.linalg.norm(rec.H)))
                obs["rho_c"] = max(obs["rho_c"], float(np.abs(rec.H - expected.h).max()))

    declared = {k: float(getattr(c, k)) for k in obs}
    failures = [
        f"{k} exceeded: {obs[k]:.6g} > {declared[k]:.6g}"
        for k in obs
        if obs[k] > declared[k] * (1 + 1e-12) + tol
    ]

    # weak convexity along random segments, one fresh sample per segment
    worst = {"L0": -np.inf, "L_g": -np.inf, "L_h": -np.inf}
    starts = region.random_points(rng, n_segments)
    ends = region.random_points(rng, n_segments)
    for a, b, s in zip(starts, ends, rng.integers(0, 2**31, size=n_segments)):
        ra = program.sample_oracle(a, int(s))
        rb = program.sample_oracle(b, int(s))
        rm = program.sample_oracle(0.5 * (a + b), int(s))
        d2 = float(np.dot(a - b, a - b))
        gap = _midpoint_gap(ra.F, rb.F, rm.F, d2, c.L0)
        worst["L0"] = max(worst["L0"], gap)
        if program.p:
            gap = _midpoint_gap(ra.G, rb.G, rm.G, d2, c.L_g).max()
            worst["L_g"] = max(worst["L_g"], gap)
        if program.m:
            up = _midpoint_gap(ra.H, rb.H, rm.H, d2, c.L_h).max()
            down = _midpoint_gap(-ra.H, -rb.H, -rm.H, d2, c.L_h).max()
            worst["L_h"] = max(worst["L_h"], up, down)
    for key, gap in worst.items():
        obs[f"convexity_gap_{key}"] = float(gap) if np.isfinite(gap) else 0.0
        declared[f"convexity_gap_{key}"] = 0.0
        if gap > tol:
            failures.append(f"weak convexity with modulus {key} refuted (midpoint gap {gap:.3g})")

    # strict feasibility of x_tilde
    xt = c.x_tilde
    obs["x_tilde_distance"] = program.feasible_set.distance(xt)
    declared["x_tilde_distance"] = 0.0
    if obs["x_tilde_distance"] > MEMBERSHIP_TOL:
        failures.append("x_tilde is outside the feasible set")
    expected = program.deterministic_oracle(xt)
    obs["g_at_x_tilde"] = float(expected.g.max()) if program.p else -np.inf
    declared["g_at_x_tilde"] = -c.eps0
    if program.p and obs["g_at_x_tilde"] > -c.eps0 + tol:
        failures.append(f"g(x_tilde) max {obs['g_at_x_tilde']:.3g} is above -eps0")
    obs["h_at_x_tilde"] = float(np.abs(expected.h).max()) if program.m else 0.0
    declared["h_at_x_tilde"] = 1e-12
    if obs["h_at_x_tilde"] > 1e-12:
        failures.append(f"|h(x_tilde)| = {obs['h_at_x_tilde']:.3g} is not zero")

    return ValidationReport(not failures, failures, obs, declared)


# ---------------------------------------------------------------------------
# serialization


def program_to_config(program: StochasticProgram) -> dict:
    """Serializable description: generator recipe, set and constants."""
    if program.source is None:
        raise InvalidArgument("program has no generator recipe; only generated programs serialize")
    return {
        **program.source,
        "set": program.feasible_set.to_dict(),
        "constants": program.constants.to_dict(),
    }


def program_from_config(config: dict) -> StochasticProgram:
    """Rebuild a generated program and check the stored constants agree."""
    from .families import generate_problem

    recipe = {k: v for k, v in config.items() if k not in ("set", "constants")}
    program = generate_problem(**recipe)
    if "constants" in config:
        stored = ProgramConstants.from_dict(config["constants"])
        for f in fields(ProgramConstants):
            if not np.allclose(getattr(stored, f.name), getattr(program.constants, f.name), rtol=1e-12, atol=0):
                raise InvalidArgument(f"stored constant {f.name} does not match the regenerated program")
    return program
