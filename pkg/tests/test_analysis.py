import json

import numpy as np
import pytest

from proxpep.analysis import build_report, quantile_report, rate_fit, write_report
from proxpep.errors import InvalidArgument


def test_exact_power_law():
    fit = rate_fit([(T, 7 * T**-0.25) for T in (256, 1024, 4096)])
    assert fit.exponent == pytest.approx(-0.25, abs=1e-12)
    assert fit.intercept == pytest.approx(np.log(7), abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.passes()


def test_constant_series():
    fit = rate_fit([(T, 3.0) for T in (256, 1024, 4096)])
    assert fit.exponent == pytest.approx(0.0, abs=1e-12)
    assert not fit.passes()


def test_noisy_power_law_exponent_window():
    rng = np.random.default_rng(0)
    Ts = (256, 1024, 4096, 16384)
    # bounded multiplicative noise, uniform on [-1, 1]
    exps = [rate_fit([(T, T**-0.25 * (1 + 0.05 * rng.uniform(-1, 1))) for T in Ts]).exponent for _ in range(100)]
    assert min(exps) >= -0.30 and max(exps) <= -0.20


def test_rate_fit_rejects_bad_series():
    with pytest.raises(InvalidArgument):
        rate_fit([(1, 1.0), (2, 0.5)])
    with pytest.raises(InvalidArgument):
        rate_fit([(1, 1.0), (2, 0.0), (4, 0.1)])


def test_identical_runs_have_flat_quantiles():
    rep = quantile_report("m", [0.3] * 100)
    assert all(v == rep.median for v in rep.quantiles.values())
    assert all(v == 1.0 for v in rep.median_multiples.values())


def test_quantiles_monotone_and_threshold_flag():
    rng = np.random.default_rng(1)
    values = rng.lognormal(size=100)
    rep = quantile_report("m", values, threshold=100.0)
    qs = [rep.quantiles[q] for q in sorted(rep.quantiles)]
    assert all(a <= b for a, b in zip(qs, qs[1:]))
    assert rep.within_threshold is True
    assert quantile_report("m", values, threshold=0.0).within_threshold is False
    assert quantile_report("m", [{"m": v} for v in values]).median == pytest.approx(np.median(values))


def test_too_few_seeds():
    with pytest.raises(InvalidArgument):
        quantile_report("m", [1.0] * 19)


def _fake_manifest(seeds=20):
    runs = {}
    for T in (256, 1024, 4096):
        for s in range(seeds):
            v = T**-0.25 * (1 + 0.01 * s)
            runs[f"T{T}_s{s}"] = {
                "T": T, "seed": s, "status": "ok",
                "summary": {
                    "mean_moreau_sq": v, "mean_g_violation": v, "mean_h_abs": v, "mean_complementarity_abs": v,
                    "equality_threshold": 10.0, "dual_bound_ok": s % 10 != 0,
                },
            }
    runs["T4096_s99"] = {"T": 4096, "seed": 99, "status": "failed", "summary": {}}
    return {"config_digest": "abc", "runs": runs}


def test_build_report():
    rep = build_report(_fake_manifest())
    for entry in rep["rates"].values():
        assert entry["exponent"] == pytest.approx(-0.25, abs=1e-9) and entry["passed"]
    assert set(rep["quantiles"]) == {256, 1024, 4096}
    assert rep["quantiles"][256]["within_threshold"] is True
    assert rep["dual_bound"][1024] == {"seeds": 20, "within": 18}
    assert rep["failed_runs"] == ["T4096_s99"]


def test_write_report_with_figure(tmp_path):
    rep = write_report(_fake_manifest(), tmp_path)
    assert json.loads((tmp_path / "report.json").read_text())["config_digest"] == "abc"
    assert (tmp_path / "rate_moreau.tsv").read_text().startswith("T\tvalue\n256\t")
    png = tmp_path / "rates.png"
    assert rep["figure"] == str(png) and png.read_bytes()[:4] == b"\x89PNG"
