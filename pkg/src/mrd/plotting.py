"""Figures for RD plots, pseudo-cutoff checks and Monte Carlo summaries."""

from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0
fig_width = 5.0
colors = ["#08589e", "#d95f02", "#1b9e77", "#7570b3", "#e7298a", "#66a61e"]

params = {
    "axes.prop_cycle": matplotlib.cycler(color=colors),
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "axes.linewidth": 0.6,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.family": "sans-serif",
    "font.size": 8,
    "legend.fontsize": 7,
    "legend.frameon": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "xtick.major.width": 0.6,
    "ytick.major.width": 0.6,
    "lines.linewidth": 1.2,
    "lines.markersize": 3,
    "figure.figsize": [fig_width, fig_width * golden_mean],
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    "svg.hashsalt": "mrd",
}

# keeps PNG bytes independent of the matplotlib version string
_PNG_METADATA = {"Software": None}


@contextmanager
def publication_style():
    with matplotlib.rc_context(params):
        yield


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", metadata=_PNG_METADATA)
    plt.close(fig)
    return path


def plot_rd(bins: pd.DataFrame, lines: pd.DataFrame, path, xlabel: str = "centered score",
            ylabel: str = "outcome") -> Path:
    """Binned means with the local-linear fit on each side of the cutoff."""
    with publication_style():
        fig, ax = plt.subplots()
        for i, side in enumerate(("left", "right")):
            b = bins[bins.side == side]
            ax.plot(b.center, b["mean"], "o", color=colors[i], label=f"{side} bin means")
            seg = lines[lines.side == side].iloc[0]
            ax.plot([seg.x_start, seg.x_end], [seg.y_start, seg.y_end], "-", color=colors[i])
        ax.axvline(0.0, color="0.5", lw=0.6, ls="--")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend(loc="best")
        return _save(fig, path)


def plot_pseudo_cutoffs(table: pd.DataFrame, path) -> Path:
    """Point estimates and confidence intervals at each tested cutoff."""
    with publication_style():
        fig, ax = plt.subplots()
        err = np.vstack([table.coef - table.ci_low, table.ci_high - table.coef])
        ax.errorbar(table.cutoff, table.coef, yerr=err, fmt="o", capsize=3, color=colors[0])
        ax.axhline(0.0, color="0.5", lw=0.6, ls="--")
        ax.set_xlabel("cutoff shift")
        ax.set_ylabel("estimate")
        return _save(fig, path)


def plot_mc_errors(raw: pd.DataFrame, path) -> Path:
    """Distribution of estimate minus oracle for every experiment cell."""
    ok = raw[raw.status == "ok"]
    cells = list(dict.fromkeys(zip(ok.axis, ok.setting, ok.method)))
    with publication_style():
        fig, ax = plt.subplots(figsize=(fig_width, max(2.0, 0.35 * len(cells) + 0.8)))
        data = [
            (ok.coef - ok.oracle)[(ok.axis == a) & (ok.setting == s) & (ok.method == m)].to_numpy()
            for a, s, m in cells
        ]
        if data:
            ax.boxplot(data, orientation="horizontal", widths=0.6, flierprops={"markersize": 2})
            ax.set_yticks(range(1, len(cells) + 1))
            ax.set_yticklabels([f"{a} | {s} | {m}" for a, s, m in cells])
        ax.axvline(0.0, color="0.5", lw=0.6, ls="--")
        ax.set_xlabel("estimate - oracle")
        return _save(fig, path)
