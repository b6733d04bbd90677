import math

import numpy as np
import pytest

from proxpep.errors import GenerationError, InvalidArgument
from proxpep.families import NOISE_BOUND, generate_problem, noise_generator
from proxpep.problem import validate_assumptions


def test_family_b_noiseless_validates():
    prog = generate_problem("affine-eq", 4, 0, 2, noise_scale=0.0, seed=1)
    rep = validate_assumptions(prog, n_points=50, n_seeds=3)
    assert rep.passed, str(rep)
    assert rep.observed["h_at_x_tilde"] <= 1e-12


def test_family_b_rejects_inequalities():
    with pytest.raises(InvalidArgument):
        generate_problem("affine-eq", 3, 1, 1)


def test_family_a_strict_feasibility_margin():
    prog = generate_problem("quad-trig", 5, 2, 2, seed=0)
    e = prog.deterministic_oracle(prog.constants.x_tilde)
    assert np.all(e.g <= -prog.constants.eps0 + 1e-12)
    assert np.max(np.abs(e.h)) <= 1e-12


def test_family_a_monte_carlo_bounds():
    prog = generate_problem("quad-trig", 5, 2, 2, seed=0)
    fam = prog.family
    rng = np.random.default_rng(2)
    worst_h = worst_g = 0.0
    per_point = 5_000
    for x in prog.feasible_set.random_points(rng, 20):
        noises = fam.noise_scale * rng.uniform(-NOISE_BOUND, NOISE_BOUND, size=(per_point, 1 + fam.p + fam.m, 1 + fam.n))
        _, G, H = fam.sampled_values_batch(x, noises)
        worst_h = max(worst_h, np.linalg.norm(H, axis=1).max())
        worst_g = max(worst_g, np.linalg.norm(G, axis=1).max())
    # 10^5 samples in total, over 20 random points
    assert worst_h <= prog.constants.nu_h
    assert worst_g <= prog.constants.nu_g


def test_family_a_extreme_noise_corner():
    # the analytic bound must also cover the worst admissible noise draw
    prog = generate_problem("quad-trig", 5, 2, 2, seed=0)
    fam = prog.family
    corner = np.full(5, 0.5)
    noise = fam.noise_scale * NOISE_BOUND * np.sign(np.concatenate([[1.0], corner]))[None, :].repeat(1 + fam.p + fam.m, 0)
    for sign in (1.0, -1.0):
        rec = fam.sampled(corner, sign * noise)
        assert np.linalg.norm(rec.H) <= prog.constants.nu_h
        assert np.linalg.norm(rec.G) <= prog.constants.nu_g
        assert np.linalg.norm(rec.grad_F) <= prog.constants.kappa_f


def test_generation_gate():
    with pytest.raises(GenerationError):
        generate_problem("quad-trig", 4, 1, 1, curvature=5.0)


def test_generation_is_seeded():
    a = generate_problem("quad-trig", 3, 1, 1, seed=7)
    b = generate_problem("quad-trig", 3, 1, 1, seed=7)
    c = generate_problem("quad-trig", 3, 1, 1, seed=8)
    x = np.array([0.1, 0.2, -0.3])
    assert a.deterministic_oracle(x).f == b.deterministic_oracle(x).f
    assert a.deterministic_oracle(x).f != c.deterministic_oracle(x).f


def test_noise_stream_is_counter_based():
    g1 = noise_generator((3 << 32) | 5).uniform(size=4)
    g2 = noise_generator((3 << 32) | 5).uniform(size=4)
    g3 = noise_generator((3 << 32) | 6).uniform(size=4)
    assert np.array_equal(g1, g2) and not np.array_equal(g1, g3)


def test_feasibility_gate_holds_by_construction():
    prog = generate_problem("quad-trig", 5, 2, 2, seed=0)
    k = prog.constants
    assert math.sqrt(2 + 4) * k.L_max * prog.diameter**2 <= k.eps0
