"""
Cluster Validation
===================
Silhouette width and Calinski-Harabasz index for a (matrix, assignments)
pair, and the agreement rule that turns a k-sweep into a verdict:

- Agreed(k) when both indices peak at the same k
- Range(k_lo, k_hi) otherwise; neither index overrides the other

The index arithmetic comes from scikit-learn. Silhouette distances are
computed in chunks bounded by SEGMINT_SILHOUETTE_WORKING_MEMORY_MB.
"""

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable

import numpy as np
import pandas as pd
import sklearn
from sklearn.metrics import calinski_harabasz_score, silhouette_samples

from segmint import config
from segmint.errors import ValidationIndexError
from segmint.schemas import KSelection, Verdict

if TYPE_CHECKING:
    from segmint.core.cluster_engine import SweepReport

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ValidationScores:
    silhouette_avg: float
    calinski: float
    per_point: np.ndarray


def _check_partition(matrix, assignments, k: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(matrix, dtype="float64")
    if x.ndim != 2:
        raise ValidationIndexError(f"expected an n x d matrix, got shape {x.shape}")
    labels = np.asarray(assignments)
    if labels.shape != (x.shape[0],):
        raise ValidationIndexError(f"{labels.shape[0] if labels.ndim else 0} assignments for {x.shape[0]} rows")
    if k < 2:
        raise ValidationIndexError(f"k={k}: validation indices need at least 2 clusters")
    labels = labels.astype(np.int64)
    if labels.min() < 0 or labels.max() >= k:
        raise ValidationIndexError(f"assignments outside [0, {k})")
    sizes = np.bincount(labels, minlength=k)
    if (sizes == 0).any():
        raise ValidationIndexError(f"cluster {int(np.flatnonzero(sizes == 0)[0])} is empty")
    return x, labels


def silhouette(matrix, assignments, k: int) -> tuple[np.ndarray, float]:
    """
    Per-point silhouette widths and their average.

    A point alone in its cluster scores 0.

    Args:
        matrix: n x d matrix
        assignments: Cluster id per row, every id in [0, k) present
        k: Number of clusters, >= 2

    Returns:
        (length-n vector in [-1, 1], mean of that vector)
    """
    x, labels = _check_partition(matrix, assignments, k)
    if k == len(x):
        values = np.zeros(len(x))
    else:
        with sklearn.config_context(working_memory=config.SILHOUETTE_WORKING_MEMORY_MB):
            values = silhouette_samples(x, labels, metric="euclidean")
        values = np.clip(values, -1.0, 1.0)
    return values, float(values.mean())


def calinski_harabasz(matrix, assignments, k: int) -> float:
    """
    Between/within dispersion ratio (B / (k - 1)) / (W / (n - k)).

    Returns inf when every cluster is a single repeated point (W = 0).
    """
    x, labels = _check_partition(matrix, assignments, k)
    if k >= len(x):
        raise ValidationIndexError(f"k={k} must be smaller than n={len(x)} for Calinski-Harabasz")
    centers = np.vstack([x[labels == c].mean(axis=0) for c in range(k)])
    within = float(((x - centers[labels]) ** 2).sum())
    if within == 0.0:
        return math.inf
    return float(calinski_harabasz_score(x, labels))


def score_clustering(matrix, assignments, k: int) -> ValidationScores:
    """Both indices for one partition; Calinski-Harabasz is inf when k equals n."""
    per_point, average = silhouette(matrix, assignments, k)
    n = np.asarray(matrix).shape[0]
    calinski = math.inf if k >= n else calinski_harabasz(matrix, assignments, k)
    return ValidationScores(silhouette_avg=average, calinski=calinski, per_point=per_point)


# ---------- MODEL SELECTION ----------

def _argmax_k(values: dict[int, float]) -> int:
    best = max(values.values())
    return min(k for k, v in values.items() if v == best)


def select_from_scores(algorithm, silhouettes: dict[int, float], calinskis: dict[int, float]) -> KSelection:
    """
    Agreement verdict from per-k index values.

    Each index picks its argmax (lowest k on ties). Agreed when the picks
    coincide, Range(lo, hi) otherwise.
    """
    if len(silhouettes) < 2 or set(silhouettes) != set(calinskis):
        raise ValidationIndexError("model selection needs both indices for at least 2 values of k")
    silhouette_k = _argmax_k(silhouettes)
    calinski_k = _argmax_k(calinskis)
    verdict = Verdict.AGREED if silhouette_k == calinski_k else Verdict.RANGE
    return KSelection(
        algorithm=algorithm,
        silhouette_k=silhouette_k,
        calinski_k=calinski_k,
        verdict=verdict,
        k_lo=min(silhouette_k, calinski_k),
        k_hi=max(silhouette_k, calinski_k),
    )


def select_best_k(report: "SweepReport") -> KSelection:
    silhouettes = {k: e.scores.silhouette_avg for k, e in report.entries.items()}
    calinskis = {k: e.scores.calinski for k, e in report.entries.items()}
    selection = select_from_scores(report.algorithm, silhouettes, calinskis)
    if selection.verdict is Verdict.AGREED:
        logger.info(f"[SWEEP] {report.algorithm.value}: indices agree on k={selection.k_lo}")
    else:
        logger.info(f"[SWEEP] {report.algorithm.value}: silhouette peaks at k={selection.silhouette_k}, "
                    f"calinski at k={selection.calinski_k}; range {selection.k_lo}..{selection.k_hi}")
    return selection


def scores_frame(reports: Iterable["SweepReport"]) -> pd.DataFrame:
    """Per-(k, algorithm) index table, sorted by algorithm then k."""
    rows = []
    for report in reports:
        for k in report.ks:
            scores = report.entries[k].scores
            rows.append({
                "k": k,
                "algorithm": report.algorithm.value,
                "silhouette": scores.silhouette_avg,
                "calinski": scores.calinski,
            })
    frame = pd.DataFrame(rows, columns=["k", "algorithm", "silhouette", "calinski"])
    return frame.sort_values(["algorithm", "k"], kind="stable").reset_index(drop=True)
