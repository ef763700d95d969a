"""
SVG Plots
==========
Static inspection figures written next to the reports:

- boxplot grid: one panel per attribute, one box per cluster
- biplot: PCA scores colored by cluster with loading arrows on top
- index curves: Silhouette and Calinski-Harabasz against k

Rendering uses the Agg backend with a fixed SVG hash salt and no date
metadata, so identical inputs give byte-identical files.
"""

import logging
import math
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from segmint.core.profiling import BoxStats, PcaProjection  # noqa: E402

logger = logging.getLogger(__name__)

_RC = {
    "svg.hashsalt": "segmint",
    "svg.fonttype": "none",
    "font.size": 8,
}
_METADATA = {"Date": None, "Creator": None}


def _save(fig, path: str | Path) -> None:
    with matplotlib.rc_context(_RC):
        fig.savefig(path, format="svg", metadata=_METADATA)
    plt.close(fig)
    logger.debug(f"[STORE] Wrote plot {path}")


def boxplot_grid(stats: BoxStats, path: str | Path, title: str = "",
                 attributes: Optional[Sequence[str]] = None) -> None:
    """Boxes drawn from precomputed statistics; whiskers span min..max."""
    names = list(attributes) if attributes is not None else stats.attributes
    columns = min(4, max(1, len(names)))
    rows = math.ceil(len(names) / columns) if names else 1

    with matplotlib.rc_context(_RC):
        fig, axes = plt.subplots(rows, columns, figsize=(3.2 * columns, 2.4 * rows), squeeze=False)
        for panel, name in zip(axes.flat, names):
            subset = stats.frame[stats.frame["attribute"] == name].sort_values("cluster")
            boxes = [
                {
                    "label": str(int(r.cluster)),
                    "whislo": r["min"],
                    "q1": r["q1"],
                    "med": r["median"],
                    "q3": r["q3"],
                    "whishi": r["max"],
                    "mean": r["mean"],
                    "fliers": [],
                }
                for _, r in subset.iterrows()
            ]
            panel.bxp(boxes, showmeans=True, showfliers=False)
            panel.set_title(name)
            panel.set_xlabel("cluster")
        for panel in list(axes.flat)[len(names):]:
            panel.axis("off")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
    _save(fig, path)


def biplot(projection: PcaProjection, assignments, columns: Sequence[str], path: str | Path,
           title: str = "") -> None:
    """Scatter of the first two PCA scores with attribute loading arrows."""
    scores = projection.scores
    loadings = projection.loadings
    labels = np.asarray(assignments)
    extent = float(np.abs(scores[:, :2]).max()) or 1.0

    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 6))
        for cluster in np.unique(labels):
            mask = labels == cluster
            ax.scatter(scores[mask, 0], scores[mask, 1], s=5, label=str(int(cluster)), edgecolors="none")
        ax.axvline(0, color="grey", linestyle="--", linewidth=0.5)
        ax.axhline(0, color="grey", linestyle="--", linewidth=0.5)
        for j, name in enumerate(columns):
            dx, dy = loadings[j, 0] * extent, loadings[j, 1] * extent
            ax.arrow(0, 0, dx, dy, color="red", alpha=0.5, width=extent * 0.002)
            ax.text(dx * 1.05, dy * 1.05, name, color="darkgreen", ha="center", va="center")
        ratio = projection.explained_variance_ratio
        ax.set_xlabel(f"PC1 ({ratio[0]:.1%})")
        ax.set_ylabel(f"PC2 ({ratio[1]:.1%})")
        ax.legend(title="cluster", markerscale=3, fontsize=6)
        if title:
            ax.set_title(title)
        fig.tight_layout()
    _save(fig, path)


def index_curves(scores: pd.DataFrame, path: str | Path) -> None:
    """Silhouette and Calinski-Harabasz against k, one line per algorithm."""
    with matplotlib.rc_context(_RC):
        fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.5))
        for algorithm, part in scores.groupby("algorithm", sort=True):
            part = part.sort_values("k")
            calinski = part["calinski"].replace([np.inf], np.nan)
            left.plot(part["k"], part["silhouette"], marker="o", label=algorithm)
            right.plot(part["k"], calinski, marker="o", label=algorithm)
        left.set_title("Silhouette")
        right.set_title("Calinski-Harabasz")
        for ax in (left, right):
            ax.set_xlabel("k")
            ax.legend()
        fig.tight_layout()
    _save(fig, path)
