"""Report figures. Everything renders off-screen to SVG with reproducible ids."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .metrics import McbResult  # noqa: E402

STYLE = {
    "svg.hashsalt": "hierprob",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def plot_mcb(result: McbResult, path: str | Path, title: str | None = None) -> None:
    """Average rank with its interval per method; best method at the bottom."""
    order = np.argsort(-result.average_rank, kind="stable")
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 0.3 * len(order) + 1.2))
        y = np.arange(len(order))
        ranks = result.average_rank[order]
        ax.hlines(y, ranks - result.half_width, ranks + result.half_width, color="0.4", lw=1.5)
        ax.plot(ranks, y, "o", color="black", ms=4)
        best = int(np.argmin(result.average_rank))
        ax.axvspan(result.lower[best], result.upper[best], color="tab:blue", alpha=0.12, lw=0)
        ax.set_yticks(y, [f"{result.methods[i]} - {result.average_rank[i]:.2f}" for i in order])
        ax.set_xlabel("average rank")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def plot_level_crps(levels: pd.DataFrame, path: str | Path) -> None:
    """Mean CRPS per hierarchy level, one line per method (log scale)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.5, 3.5))
        for method, grp in levels.groupby("method", sort=False):
            ax.plot(grp["level"], grp["crps"], marker="o", ms=3, lw=1, label=method)
        ax.set_xlabel("level")
        ax.set_ylabel("mean CRPS")
        if (levels["crps"] > 0).all():
            ax.set_yscale("log")
        ax.set_xticks(sorted(levels["level"].unique()))
        ax.legend(fontsize=6, ncol=2, frameon=False)
        fig.tight_layout()
        _save(fig, path)
