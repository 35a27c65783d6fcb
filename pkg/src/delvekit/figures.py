"""Figure rendering for the report paths. Headless only: every function
writes a file and never opens a window."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from scipy.stats import norm

from .harness import NORMAL_VARIANTS, MCReport, PairwiseZMatrix, PowerTable

__all__ = ["plot_null_histogram", "plot_power_curves", "plot_pairwise_heatmap"]


def plot_null_histogram(report: MCReport, path, bins: int = 40) -> None:
    """Histogram of each variant's Z-scores with the N(0,1) density overlaid.

    Baseline variants (raw statistics) are drawn without the overlay.
    """
    k = len(report.variants)
    fig, axes = plt.subplots(1, k, figsize=(4.5 * k, 3.6), squeeze=False)
    for ax, v in zip(axes[0], report.variants):
        vals = np.asarray(report.samples[v], dtype=np.float64)
        ax.hist(vals, bins=bins, density=True, color="#4878cf", alpha=0.75)
        if v in NORMAL_VARIANTS:
            lo, hi = min(vals.min(), -4.0), max(vals.max(), 4.0)
            z = np.linspace(lo, hi, 400)
            ax.plot(z, norm.pdf(z), "k-", lw=1.2)
        stats = report.summary[v]
        ax.set_title(f"{v}: mean={stats['mean']:.3f}, sd={stats['sd']:.3f}")
        ax.set_xlabel("statistic")
    axes[0][0].set_ylabel("density")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_power_curves(table: PowerTable, path) -> None:
    """Rejection rate versus signal level, one line per variant."""
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    grid = np.asarray(table.grid, dtype=np.float64)
    for v, pw in table.power.items():
        ax.plot(grid, np.asarray(pw, dtype=np.float64), "o-", ms=4, label=v)
    ax.axhline(table.level, color="gray", ls="--", lw=1, label=f"level {table.level:g}")
    ax.set_xlabel("signal level")
    ax.set_ylabel("rejection rate")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_pairwise_heatmap(pz: PairwiseZMatrix, path) -> None:
    """Symmetric heatmap of pairwise two-group Z-scores."""
    k = len(pz.labels)
    fig, ax = plt.subplots(figsize=(0.6 * k + 3.0, 0.6 * k + 2.4))
    finite = pz.matrix[np.isfinite(pz.matrix)]
    vmax = float(np.abs(finite).max()) if finite.size else 1.0
    im = ax.imshow(pz.matrix, cmap="coolwarm", vmin=-vmax, vmax=vmax)
    ax.set_xticks(range(k), [str(x) for x in pz.labels], rotation=45, ha="right")
    ax.set_yticks(range(k), [str(x) for x in pz.labels])
    for i in range(k):
        for j in range(k):
            if i != j and np.isfinite(pz.matrix[i, j]):
                ax.text(j, i, f"{pz.matrix[i, j]:.1f}", ha="center", va="center", fontsize=7)
    fig.colorbar(im, ax=ax, label="Z-score")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
