"""Figures for sweep reports, rendered off-screen to files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "font.size": 9,
    "axes.linewidth": 0.6,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
    "savefig.dpi": 150,
}

LABELS = {
    "moreau": "mean squared envelope gradient",
    "inequality": "mean inequality violation",
    "equality": "mean equality violation",
    "complementarity": "mean complementarity violation",
}


def plot_rates(report: dict, path) -> Path:
    """Log-log plot of every rate table with its fitted power law and a T^-1/4 guide."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, rows in report["tables"].items():
            if len(rows) < 2:
                continue
            T = np.array([r[0] for r in rows], float)
            v = np.array([r[1] for r in rows], float)
            fit = report["rates"].get(name, {})
            label = LABELS.get(name, name)
            if fit.get("exponent") is not None:
                label += f" (slope {fit['exponent']:.2f})"
            (line,) = ax.loglog(T, v, "o-", label=label)
            if fit.get("exponent") is not None:
                ax.loglog(T, np.exp(fit["intercept"]) * T ** fit["exponent"], ":", color=line.get_color())
        ax.set_xlabel("horizon T")
        ax.set_ylabel("time-averaged value")
        ax.legend(frameon=False, fontsize=7)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_trajectory(metrics: dict, path, title: str | None = None) -> Path:
    """Running averages of the per-iteration series of one run."""
    path = Path(path)
    t = metrics["t"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for key in ("g_violation", "h_abs", "complementarity_abs", "moreau_sq"):
            series = metrics.get(key)
            if series is None:
                continue
            mask = np.isfinite(series)
            if not mask.any():
                continue
            running = np.cumsum(series[mask]) / np.arange(1, mask.sum() + 1)
            ax.loglog(t[mask], np.maximum(running, 1e-300), label=key.replace("_", " "))
        ax.set_xlabel("iteration t")
        ax.set_ylabel("running average")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False, fontsize=7)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
