import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from proxpep.errors import InvalidArgument, PreconditionViolation
from proxpep.families import generate_problem
from proxpep.problem import (
    Ball,
    Box,
    ExpectedRecord,
    ProgramConstants,
    SampleRecord,
    StochasticProgram,
    feasible_set_from_dict,
    program_from_config,
    program_to_config,
    project,
    sample,
    validate_assumptions,
)


def test_box_projection_clamps():
    box = Box(np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
    assert np.array_equal(project([2.0, 0.5], box), [1.0, 0.5])


def test_ball_projection_scales_radially():
    ball = Ball(np.zeros(2), 1.0)
    np.testing.assert_allclose(project([3.0, 4.0], ball), [0.6, 0.8], rtol=0, atol=1e-15)


def test_projection_is_identity_inside():
    box = Box(-np.ones(2), np.ones(2))
    assert np.array_equal(project([0.1, 0.1], box), [0.1, 0.1])


def test_projection_dimension_mismatch():
    with pytest.raises(InvalidArgument):
        project([1.0, 2.0, 3.0], Box(-np.ones(2), np.ones(2)))


def test_set_serialization_roundtrip():
    for s in (Box(np.array([-1.0, 0.0]), np.array([2.0, 1.0])), Ball(np.array([0.5, -0.5]), 2.0)):
        again = feasible_set_from_dict(s.to_dict())
        z = np.array([3.0, -4.0])
        assert np.array_equal(again.project(z), s.project(z))


SETS = [Box(np.array([-1.0, -0.5, 0.0]), np.array([1.0, 0.5, 2.0])), Ball(np.array([0.2, -0.1, 0.3]), 0.7)]
vec3 = arrays(np.float64, 3, elements=st.floats(-10, 10, allow_nan=False))


@pytest.mark.parametrize("feasible", SETS, ids=["box", "ball"])
@settings(max_examples=300, deadline=None)
@given(a=vec3, b=vec3)
def test_projection_idempotent_and_nonexpansive(feasible, a, b):
    pa, pb = feasible.project(a), feasible.project(b)
    np.testing.assert_allclose(feasible.project(pa), pa, rtol=0, atol=1e-14)
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-12
    assert feasible.distance(pa) <= 1e-12


@pytest.mark.parametrize("feasible", SETS, ids=["box", "ball"])
def test_projection_bulk_pairs(feasible):
    rng = np.random.default_rng(3)
    A = rng.normal(scale=3, size=(10_000, 3))
    B = rng.normal(scale=3, size=(10_000, 3))
    PA = np.array([feasible.project(a) for a in A])
    PB = np.array([feasible.project(b) for b in B])
    assert np.all(np.linalg.norm(PA - PB, axis=1) <= np.linalg.norm(A - B, axis=1) + 1e-12)
    assert np.allclose(np.array([feasible.project(p) for p in PA]), PA, rtol=0, atol=1e-14)
    assert feasible.diameter >= np.max(np.linalg.norm(PA - PB, axis=1)) - 1e-12


def test_projection_minimizes_distance():
    rng = np.random.default_rng(4)
    for feasible in SETS:
        for _ in range(50):
            z = rng.normal(scale=3, size=3)
            pz = feasible.project(z)
            others = feasible.random_points(rng, 500)
            assert np.linalg.norm(z - pz) <= np.linalg.norm(others - z, axis=1).min() + 1e-12


@pytest.fixture(scope="module")
def family_a():
    return generate_problem("quad-trig", 5, 2, 2, seed=0)


def test_sample_is_pure(family_a):
    x = family_a.constants.x_tilde
    r1, r2 = sample(family_a, x, 123), sample(family_a, x, 123)
    for name in ("F", "grad_F", "G", "jac_G", "H", "jac_H"):
        assert np.array_equal(getattr(r1, name), getattr(r2, name))


def test_sample_rejects_points_outside(family_a):
    with pytest.raises(PreconditionViolation):
        sample(family_a, np.full(5, 0.6), 0)
    with pytest.raises(InvalidArgument):
        sample(family_a, np.zeros(4), 0)


def test_zero_noise_sample_equals_expectation():
    prog = generate_problem("quad-trig", 3, 1, 1, noise_scale=0.0, seed=5)
    x = np.array([0.1, -0.2, 0.3])
    rec, e = sample(prog, x, 9), prog.deterministic_oracle(x)
    assert rec.F == e.f and np.array_equal(rec.G, e.g) and np.array_equal(rec.H, e.h)
    assert np.array_equal(rec.grad_F, e.grad_f) and np.array_equal(rec.jac_G, e.jac_g)


def test_monte_carlo_mean_matches_expectation(family_a):
    rng = np.random.default_rng(11)
    fam = family_a.family
    N = 100_000
    for x in family_a.feasible_set.random_points(rng, 20):
        # batched draw: the per-seed generator is too slow for 10^5 x 20 calls
        noises = fam.noise_scale * rng.uniform(-np.sqrt(3), np.sqrt(3), size=(N, 1 + fam.p + fam.m, 1 + fam.n))
        F, G, H = fam.sampled_values_batch(x, noises)
        e = family_a.deterministic_oracle(x)
        bound = 4 * family_a.constants.nu_g / np.sqrt(N)
        assert np.all(np.abs(G.mean(axis=0) - e.g) <= bound)
        sd = G.std(axis=0, ddof=1)
        assert np.all(np.abs(G.mean(axis=0) - e.g) <= 3 * sd / np.sqrt(N) + 1e-15)


def test_seeded_draws_are_unbiased(family_a):
    # the real Philox-keyed stream, fewer draws
    x = np.zeros(5)
    e = family_a.deterministic_oracle(x)
    recs = [sample(family_a, x, s) for s in range(20_000)]
    G = np.array([r.G for r in recs])
    H = np.array([r.H for r in recs])
    assert np.all(np.abs(G.mean(0) - e.g) <= 4 * family_a.constants.nu_g / np.sqrt(len(recs)))
    assert np.all(np.abs(H.mean(0) - e.h) <= 4 * family_a.constants.nu_h / np.sqrt(len(recs)))


def _toy_program(g_value, eps0=0.1, nu_g=2.0):
    """Constant constraint g = g_value with samples g_value +- 1.5."""
    box = Box(-np.ones(1), np.ones(1))

    def expected(x):
        return ExpectedRecord(0.0, np.zeros(1), np.array([g_value]), np.zeros((1, 1)), np.zeros(0), np.zeros((0, 1)))

    def sampler(x, seed):
        shift = 1.5 if seed % 2 else -1.5
        return SampleRecord(0.0, np.zeros(1), np.array([g_value + shift]), np.zeros((1, 1)), np.zeros(0), np.zeros((0, 1)))

    consts = ProgramConstants(0.0, [0.0], [], 0.0, 0.0, 0.0, nu_g, 0.0, 2.0, [0.0], eps0)
    return StochasticProgram(box, 1, 1, 0, sampler, expected, consts)


def test_validation_passes_declared_bound():
    prog = _toy_program(-0.2)
    rep = validate_assumptions(prog, n_points=5, n_seeds=10)
    assert rep.passed, rep.failures
    assert rep.observed["nu_g"] == pytest.approx(1.7)


def test_validation_flags_strict_feasibility():
    prog = _toy_program(-0.05)
    rep = validate_assumptions(prog, n_points=5, n_seeds=5)
    assert not rep.passed
    assert any("x_tilde" in msg for msg in rep.failures)


def test_validation_flags_bound_exceedance():
    prog = _toy_program(-0.2, nu_g=0.5)
    rep = validate_assumptions(prog, n_points=5, n_seeds=30)
    assert any("nu_g" in msg for msg in rep.failures)


def test_family_a_validates(family_a):
    rep = validate_assumptions(family_a)
    assert rep.passed, str(rep)


def test_program_config_roundtrip(family_a):
    cfg = program_to_config(family_a)
    again = program_from_config(cfg)
    x = np.full(5, 0.1)
    assert np.array_equal(again.deterministic_oracle(x).g, family_a.deterministic_oracle(x).g)
    cfg["constants"]["nu_g"] *= 2
    with pytest.raises(InvalidArgument):
        program_from_config(cfg)
