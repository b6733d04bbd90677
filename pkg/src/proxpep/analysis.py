"""Rate fits, seed quantiles and the sweep report."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgument

RATE_METRICS = {
    "moreau": "mean_moreau_sq",
    "inequality": "mean_g_violation",
    "equality": "mean_h_abs",
    "complementarity": "mean_complementarity_abs",
}
RATE_EXPONENT_MAX = -0.15
RATE_R2_MIN = 0.8
MIN_QUANTILE_SEEDS = 20


@dataclass
class RateFit:
    exponent: float
    intercept: float
    r_squared: float
    points: list

    def passes(self, max_exponent: float = RATE_EXPONENT_MAX, min_r2: float = RATE_R2_MIN) -> bool:
        return self.exponent <= max_exponent and self.r_squared >= min_r2


def rate_fit(series) -> RateFit:
    """Least-squares slope of log(value) against log(T) over (T, value) pairs."""
    pts = [(float(T), float(v)) for T, v in series]
    if len(pts) < 3:
        raise InvalidArgument("a rate fit needs at least three points")
    if any(T <= 0 or v <= 0 for T, v in pts):
        raise InvalidArgument("horizons and values must be positive")
    x = np.log([T for T, _ in pts])
    y = np.log([v for _, v in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    spread = float(np.sum((y - y.mean()) ** 2))
    # a perfectly flat series is explained exactly by its zero slope
    r2 = 1.0 - float(np.sum(resid**2)) / spread if spread > 1e-24 else 1.0
    return RateFit(float(slope), float(intercept), r2, [(float(a), float(b)) for a, b in zip(x, y)])


@dataclass
class QuantileReport:
    metric: str
    count: int
    median: float
    quantiles: dict
    median_multiples: dict
    threshold: float | None = None
    threshold_level: float = 0.9
    within_threshold: bool | None = None
    notes: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def quantile_report(metric: str, runs, levels=(0.5, 0.75, 0.9, 0.95), threshold: float | None = None, threshold_level: float = 0.9) -> QuantileReport:
    """Empirical quantiles of a per-seed metric.

    ``runs`` holds either numbers or summary dicts containing ``metric``.
    """
    values = np.array([r[metric] if isinstance(r, dict) else r for r in runs], dtype=float)
    if values.size < MIN_QUANTILE_SEEDS:
        raise InvalidArgument(f"need at least {MIN_QUANTILE_SEEDS} seeds, got {values.size}")
    levels = sorted(set(levels) | {threshold_level})
    if any(not 0 <= q <= 1 for q in levels):
        raise InvalidArgument("quantile levels must lie in [0, 1]")
    qs = {float(q): float(v) for q, v in zip(levels, np.quantile(values, levels))}
    med = float(np.median(values))
    multiples = {q: (v / med if med > 0 else (1.0 if v == med else math.inf)) for q, v in qs.items()}
    rep = QuantileReport(metric, int(values.size), med, qs, multiples, threshold, threshold_level)
    if threshold is not None:
        rep.within_threshold = bool(qs[float(threshold_level)] <= threshold)
    return rep


def per_horizon(manifest: dict, key: str) -> dict:
    """{T: [summary[key] over successful seeds]}."""
    out = defaultdict(list)
    for rec in manifest["runs"].values():
        if rec["status"] == "ok" and key in rec.get("summary", {}):
            out[rec["T"]].append(rec["summary"][key])
    return dict(sorted(out.items()))


def build_report(manifest: dict) -> dict:
    """Machine-readable report: rate fits, quantiles, dual-bound counts and plot tables."""
    report = {"config_digest": manifest.get("config_digest"), "rates": {}, "tables": {}, "quantiles": {}, "dual_bound": {}}
    for name, key in RATE_METRICS.items():
        table = {T: float(np.mean(v)) for T, v in per_horizon(manifest, key).items()}
        report["tables"][name] = sorted(table.items())
        entry = {"metric": key, "points": len(table)}
        if len(table) >= 3 and all(v > 0 for v in table.values()):
            fit = rate_fit(table.items())
            entry.update(exponent=fit.exponent, intercept=fit.intercept, r_squared=fit.r_squared, passed=fit.passes())
        else:
            entry.update(exponent=None, r_squared=None, passed=None)
        report["rates"][name] = entry

    h_abs = per_horizon(manifest, "mean_h_abs")
    pi_thresholds = per_horizon(manifest, "equality_threshold")
    for T, values in h_abs.items():
        if len(values) >= MIN_QUANTILE_SEEDS:
            thr = pi_thresholds.get(T, [None])[0]
            report["quantiles"][T] = quantile_report("mean_h_abs", values, threshold=thr).to_dict()

    ok = per_horizon(manifest, "dual_bound_ok")
    for T, flags in ok.items():
        report["dual_bound"][T] = {"seeds": len(flags), "within": int(sum(bool(f) for f in flags))}
    failures = [k for k, r in manifest["runs"].items() if r["status"] != "ok"]
    report["failed_runs"] = failures
    return report


def write_report(manifest: dict, output_dir, figures: bool = True) -> dict:
    out = Path(output_dir)
    rep = build_report(manifest)
    (out / "report.json").write_text(json.dumps(rep, indent=1, sort_keys=True, default=str))
    for name, rows in rep["tables"].items():
        lines = ["T\tvalue"] + [f"{T}\t{v:.12e}" for T, v in rows]
        (out / f"rate_{name}.tsv").write_text("\n".join(lines) + "\n")
    if figures and any(len(rows) >= 2 for rows in rep["tables"].values()):
        from .plotting import plot_rates

        rep["figure"] = str(plot_rates(rep, out / "rates.png"))
    return rep
