"""
Cluster Engine
===============
Partitional clustering on a dense n x d matrix:

- kmeans: Lloyd iterations from Forgy (or k-means++) seeds, empty clusters
  reseeded with the point farthest from its center
- pam: BUILD + SWAP k-medoids on a precomputed dissimilarity matrix
- clara: pam on random row samples, medoids scored on the full data
- sweep: restarts x k grid, best run per k kept and scored

Every run draws from its own numpy Generator seeded by derive_seed(), so
results never depend on how restarts are scheduled across workers.
"""

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial.distance import cdist, pdist, squareform

from segmint import config
from segmint.core.validation import ValidationScores, score_clustering
from segmint.errors import ClusteringError
from segmint.schemas import Algorithm, SweepConfig, SweepRecord, SweepSummary

logger = logging.getLogger(__name__)

_ALGORITHM_CODES = {Algorithm.KMEANS: 1, Algorithm.CLARA: 2}

# Relative slack on the WCSS monotonicity check (float summation noise).
_MONOTONE_RTOL = 1e-9


@dataclass(frozen=True)
class ClusteringResult:
    """
    One clustering run.

    centers holds the k x d center matrix for K-means and the medoid row
    indices (ascending) for CLARA. trace records the objective after every
    assignment step (K-means) or every sample (CLARA).
    """
    algorithm: Algorithm
    k: int
    assignments: np.ndarray
    centers: np.ndarray
    objective: float
    seed: int
    iterations: int
    trace: tuple[float, ...] = ()

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


class MedoidSolution(NamedTuple):
    medoids: np.ndarray
    assignments: np.ndarray
    objective: float
    trace: tuple[float, ...]


# ---------- INPUT CHECKS ----------

def _check_matrix(matrix) -> np.ndarray:
    x = np.asarray(matrix, dtype="float64")
    if x.ndim != 2 or x.shape[0] == 0:
        raise ClusteringError(f"expected a non-empty n x d matrix, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ClusteringError("matrix contains non-finite values")
    return x


def _check_k(k: int, n: int) -> None:
    if not 1 <= k <= n:
        raise ClusteringError(f"k={k} must be between 1 and n={n}")


# ---------- K-MEANS ----------

def _assign(x: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest center per row (lowest id on ties) and the squared distance to it."""
    d2 = cdist(x, centers, "sqeuclidean")
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(len(x)), labels]


def _update(x: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    return np.vstack([x[labels == c].mean(axis=0) for c in range(k)])


def _repair_empty(x: np.ndarray, centers: np.ndarray, labels: np.ndarray,
                  d2: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Move every empty cluster's center onto the point farthest from its center."""
    k = len(centers)
    while True:
        empty = np.flatnonzero(np.bincount(labels, minlength=k) == 0)
        if len(empty) == 0:
            return centers, labels, d2
        farthest = int(np.argmax(d2))
        if d2[farthest] == 0:
            raise ClusteringError(f"cannot repair empty cluster {int(empty[0])}: every point sits on its center")
        centers = centers.copy()
        centers[empty[0]] = x[farthest]
        labels, d2 = _assign(x, centers)


def _initial_centers(x: np.ndarray, k: int, rng: np.random.Generator, init: str) -> np.ndarray:
    _, first_rows = np.unique(x, axis=0, return_index=True)
    first_rows = np.sort(first_rows)
    if len(first_rows) < k:
        raise ClusteringError(f"k={k} exceeds the {len(first_rows)} distinct rows of the matrix")

    if init == "forgy":
        return x[rng.choice(first_rows, size=k, replace=False)].copy()

    if init != "k-means++":
        raise ClusteringError(f"unknown init {init!r}; expected 'forgy' or 'k-means++'")
    chosen = [int(rng.integers(len(x)))]
    d2 = cdist(x, x[chosen], "sqeuclidean").min(axis=1)
    for _ in range(1, k):
        nxt = int(rng.choice(len(x), p=d2 / d2.sum()))
        chosen.append(nxt)
        d2 = np.minimum(d2, cdist(x, x[[nxt]], "sqeuclidean")[:, 0])
    return x[chosen].copy()


def kmeans(matrix, k: int, seed: int, max_iterations: int = 100,
           tolerance: float = 1e-8, init: str = "forgy") -> ClusteringResult:
    """
    Lloyd's K-means.

    Args:
        matrix: n x d finite matrix
        k: Number of clusters, 1 <= k <= n
        seed: Generator seed for the initial centers
        max_iterations: Cap on update/assign rounds
        tolerance: Stop once WCSS improves by less than this (absolute)
        init: "forgy" (k distinct random rows) or "k-means++"

    Returns:
        ClusteringResult whose centers are the ones the final assignment
        was made against
    """
    x = _check_matrix(matrix)
    _check_k(k, len(x))
    rng = np.random.default_rng(seed)

    centers = _initial_centers(x, k, rng, init)
    labels, d2 = _assign(x, centers)
    centers, labels, d2 = _repair_empty(x, centers, labels, d2)
    wcss = float(d2.sum())
    trace = [wcss]

    iterations = 0
    for iterations in range(1, max_iterations + 1):
        centers = _update(x, labels, k)
        labels, d2 = _assign(x, centers)
        centers, labels, d2 = _repair_empty(x, centers, labels, d2)
        current = float(d2.sum())
        trace.append(current)
        if current > wcss + _MONOTONE_RTOL * max(wcss, 1.0):
            raise ClusteringError(f"WCSS increased from {wcss} to {current} at iteration {iterations}")
        improvement = wcss - current
        wcss = current
        if improvement < tolerance:
            break

    return ClusteringResult(
        algorithm=Algorithm.KMEANS,
        k=k,
        assignments=labels.astype(np.int64),
        centers=centers,
        objective=wcss,
        seed=int(seed),
        iterations=iterations,
        trace=tuple(trace),
    )


# ---------- PAM ----------

def _check_dissimilarity(d) -> np.ndarray:
    d = np.asarray(d, dtype="float64")
    if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] == 0:
        raise ClusteringError(f"dissimilarity must be a non-empty square matrix, got shape {d.shape}")
    if not np.isfinite(d).all():
        raise ClusteringError("dissimilarity contains non-finite values")
    if not np.allclose(d, d.T, rtol=1e-12, atol=1e-12):
        raise ClusteringError("dissimilarity matrix is not symmetric")
    if np.any(np.diag(d) != 0):
        raise ClusteringError("dissimilarity matrix has a non-zero diagonal")
    if np.any(d < 0):
        raise ClusteringError("dissimilarity matrix has negative entries")
    return d


def _build(d: np.ndarray, k: int) -> list[int]:
    medoids = [int(np.argmin(d.sum(axis=1)))]
    nearest = d[:, medoids[0]].copy()
    while len(medoids) < k:
        gain = np.maximum(nearest[:, None] - d, 0.0).sum(axis=0)
        gain[medoids] = -np.inf
        h = int(np.argmax(gain))
        medoids.append(h)
        nearest = np.minimum(nearest, d[:, h])
    return medoids


def _nearest_two(d: np.ndarray, medoids: list[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dm = d[:, medoids]
    order = np.argsort(dm, axis=1, kind="stable")
    rows = np.arange(len(d))
    d1 = dm[rows, order[:, 0]]
    d2 = dm[rows, order[:, 1]] if len(medoids) > 1 else np.full(len(d), np.inf)
    return order[:, 0], d1, d2


def pam(dissimilarity, k: int) -> MedoidSolution:
    """
    Partitioning Around Medoids.

    BUILD adds medoids greedily (first the row with the smallest total
    dissimilarity, then the largest gain, lowest index on ties); SWAP then
    applies the best (medoid, non-medoid) exchange while it strictly lowers
    the total dissimilarity.

    Args:
        dissimilarity: n x n symmetric, zero-diagonal, non-negative matrix
        k: Number of medoids, 1 <= k <= n

    Returns:
        MedoidSolution with ascending medoid indices, assignments (each
        medoid labels its own cluster) and the summed dissimilarity
    """
    d = _check_dissimilarity(dissimilarity)
    n = len(d)
    _check_k(k, n)

    medoids = _build(d, k)
    objective = float(d[:, medoids].min(axis=1).sum())
    trace = [objective]

    while len(medoids) < n:
        nearest, d1, d2 = _nearest_two(d, medoids)
        a = np.minimum(d - d1[:, None], 0.0)
        b = np.minimum(d2[:, None], d) - d1[:, None]
        membership = (nearest[None, :] == np.arange(k)[:, None]).astype("float64")
        delta = a.sum(axis=0)[None, :] + membership @ (b - a)
        delta[:, medoids] = np.inf

        i, h = np.unravel_index(int(np.argmin(delta)), delta.shape)
        if not delta[i, h] < -1e-10 * max(objective, 1.0):
            break
        medoids[i] = int(h)
        objective = float(d[:, medoids].min(axis=1).sum())
        trace.append(objective)

    medoids_arr = np.array(sorted(medoids), dtype=np.int64)
    labels = np.argmin(d[:, medoids_arr], axis=1)
    labels[medoids_arr] = np.arange(k)
    objective = float(d[np.arange(n), medoids_arr[labels]].sum())
    return MedoidSolution(medoids_arr, labels.astype(np.int64), objective, tuple(trace))


# ---------- CLARA ----------

def default_sample_size(n: int, k: int) -> int:
    return min(n, 40 + 2 * k)


def clara(matrix, k: int, samples: int = 5, sample_size: Optional[int] = None,
          seed: int = 0) -> ClusteringResult:
    """
    CLARA: PAM on row samples, medoids judged on the whole matrix.

    After the first draw every sample contains the best medoids found so
    far. A later sample replaces the current best only if its full-data
    average dissimilarity is strictly smaller.

    Args:
        matrix: n x d finite matrix
        k: Number of medoids
        samples: Number of samples drawn
        sample_size: Rows per sample, k < sample_size <= n;
                     min(n, 40 + 2k) when None
        seed: Generator seed for the sampling

    Returns:
        ClusteringResult with medoid row indices as centers and the average
        Euclidean distance to the assigned medoid as objective
    """
    x = _check_matrix(matrix)
    n = len(x)
    _check_k(k, n)
    if samples < 1:
        raise ClusteringError(f"samples={samples} must be >= 1")
    size = default_sample_size(n, k) if sample_size is None else sample_size
    if size <= k:
        raise ClusteringError(f"sample_size={size} must exceed k={k}")
    if size > n:
        raise ClusteringError(f"sample_size={size} exceeds n={n}")

    rng = np.random.default_rng(seed)
    rows = np.arange(n)
    best_medoids: Optional[np.ndarray] = None
    best_labels: Optional[np.ndarray] = None
    best_objective = np.inf
    trace = []

    for s in range(samples):
        if best_medoids is None:
            idx = rng.choice(n, size=size, replace=False)
        else:
            others = np.setdiff1d(rows, best_medoids)
            idx = np.concatenate([best_medoids, rng.choice(others, size=size - k, replace=False)])
        idx = np.sort(idx)

        solution = pam(squareform(pdist(x[idx])), k)
        medoids = idx[solution.medoids]
        dist = cdist(x, x[medoids])
        labels = np.argmin(dist, axis=1)
        labels[medoids] = np.arange(k)
        objective = float(dist[rows, labels].mean())
        trace.append(objective)
        logger.debug(f"[CLARA] k={k} sample {s}: average dissimilarity {objective:.6f}")

        if objective < best_objective:
            best_medoids, best_labels, best_objective = medoids, labels, objective

    return ClusteringResult(
        algorithm=Algorithm.CLARA,
        k=k,
        assignments=best_labels.astype(np.int64),
        centers=best_medoids,
        objective=best_objective,
        seed=int(seed),
        iterations=samples,
        trace=tuple(trace),
    )


# ---------- SWEEP ----------

def derive_seed(base_seed: int, algorithm: Algorithm, k: int, restart_index: int) -> int:
    """Per-run 64-bit seed, a pure function of (base_seed, algorithm, k, restart)."""
    sequence = np.random.SeedSequence([base_seed, _ALGORITHM_CODES[Algorithm(algorithm)], k, restart_index])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def run_once(matrix: np.ndarray, algorithm: Algorithm, k: int, seed: int,
             settings: SweepConfig) -> ClusteringResult:
    if Algorithm(algorithm) is Algorithm.KMEANS:
        return kmeans(matrix, k, seed, settings.max_iterations, settings.tolerance, settings.init)
    return clara(matrix, k, settings.clara_samples, settings.clara_sample_size, seed)


@dataclass(frozen=True)
class SweepEntry:
    """Retained run for one k, with the index scores and every restart's objective."""
    result: ClusteringResult
    restart_index: int
    scores: ValidationScores
    restart_objectives: tuple[float, ...]


@dataclass(frozen=True)
class SweepReport:
    algorithm: Algorithm
    config: SweepConfig
    n_rows: int
    n_columns: int
    entries: dict[int, SweepEntry] = field(default_factory=dict)
    skipped_ks: tuple[int, ...] = ()

    @property
    def ks(self) -> list[int]:
        return sorted(self.entries)

    def result(self, k: int) -> ClusteringResult:
        if k not in self.entries:
            raise ClusteringError(f"sweep for {self.algorithm.value} has no result for k={k}")
        return self.entries[k].result

    def records(self, assignment_files: Optional[dict[int, str]] = None) -> list[SweepRecord]:
        files = assignment_files or {}
        records = []
        for k in self.ks:
            entry = self.entries[k]
            calinski = entry.scores.calinski
            records.append(SweepRecord(
                algorithm=self.algorithm,
                k=k,
                objective=entry.result.objective,
                seed=entry.result.seed,
                restart_index=entry.restart_index,
                iterations=entry.result.iterations,
                silhouette=entry.scores.silhouette_avg,
                calinski=calinski if np.isfinite(calinski) else None,
                assignment_file=files.get(k),
            ))
        return records

    def summary(self, assignment_files: Optional[dict[int, str]] = None) -> SweepSummary:
        return SweepSummary(
            algorithm=self.algorithm,
            n_rows=self.n_rows,
            n_columns=self.n_columns,
            config=self.config,
            results=self.records(assignment_files),
            skipped_ks=list(self.skipped_ks),
        )


def sweep(matrix, algorithm: Algorithm, settings: SweepConfig,
          workers: Optional[int] = None) -> SweepReport:
    """
    Restart / k-sweep protocol.

    For every k in [k_min, k_max] runs `restarts` independent runs, keeps
    the one with the lowest objective (lowest restart index on ties) and
    attaches its Silhouette and Calinski-Harabasz scores. A k above the
    number of distinct rows is skipped with a warning and listed in
    SweepReport.skipped_ks.

    Args:
        matrix: n x d finite matrix (shared read-only by the workers)
        algorithm: KMEANS or CLARA
        settings: SweepConfig
        workers: joblib worker count; SEGMINT_WORKERS when None

    Returns:
        SweepReport keyed by k
    """
    x = _check_matrix(matrix)
    algorithm = Algorithm(algorithm)
    if settings.k_max > len(x):
        raise ClusteringError(f"k_max={settings.k_max} exceeds n={len(x)}")
    n_jobs = config.WORKERS if workers is None else workers
    distinct = len(np.unique(x, axis=0))
    ks = [k for k in range(settings.k_min, settings.k_max + 1) if k <= distinct]
    skipped = tuple(k for k in range(settings.k_min, settings.k_max + 1) if k > distinct)
    if not ks:
        raise ClusteringError(f"k_min={settings.k_min} exceeds the {distinct} distinct rows of the matrix")
    if skipped:
        logger.warning(f"[SWEEP] {algorithm.value}: only {distinct} distinct rows, "
                       f"k={skipped[0]}..{skipped[-1]} skipped")

    logger.info(f"[SWEEP] {algorithm.value}: k={settings.k_min}..{settings.k_max}, "
                f"{settings.restarts} restarts, {n_jobs} workers, n={x.shape[0]}, d={x.shape[1]}")

    entries = {}
    with Parallel(n_jobs=n_jobs) as parallel:
        for k in ks:
            seeds = [derive_seed(settings.base_seed, algorithm, k, r) for r in range(settings.restarts)]
            runs = parallel(delayed(run_once)(x, algorithm, k, seed, settings) for seed in seeds)
            objectives = tuple(run.objective for run in runs)
            best_index = min(range(len(runs)), key=lambda r: (objectives[r], r))
            best = runs[best_index]
            scores = score_clustering(x, best.assignments, k)
            entries[k] = SweepEntry(best, best_index, scores, objectives)
            logger.info(f"[SWEEP] {algorithm.value} k={k}: objective={best.objective:.6g} "
                        f"(restart {best_index}), silhouette={scores.silhouette_avg:.4f}, "
                        f"calinski={scores.calinski:.4f}")

    return SweepReport(algorithm, settings, x.shape[0], x.shape[1], entries, skipped)
