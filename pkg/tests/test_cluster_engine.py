import itertools

import numpy as np
import pytest
from scipy.spatial.distance import pdist, squareform
from sklearn.datasets import make_blobs

from segmint.core.cluster_engine import (
    clara,
    default_sample_size,
    derive_seed,
    kmeans,
    pam,
    sweep,
)
from segmint.errors import ClusteringError
from segmint.schemas import Algorithm, SweepConfig

SQUARE = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])


def _wcss(x, labels):
    return sum(((x[labels == c] - x[labels == c].mean(axis=0)) ** 2).sum() for c in np.unique(labels))


def _brute_force_medoids(d, k):
    n = len(d)
    return min(d[:, list(m)].min(axis=1).sum() for m in itertools.combinations(range(n), k))


def _same_partition(a, b):
    pairs = set(zip(a.tolist(), b.tolist()))
    return len(pairs) == len(set(a.tolist())) == len(set(b.tolist()))


# ---------- K-MEANS ----------

def test_square_fixture_matches_partition_oracle():
    best = min(
        _wcss(SQUARE, np.array(labels))
        for labels in itertools.product([0, 1], repeat=4)
        if len(set(labels)) == 2
    )
    assert best == pytest.approx(1.0)

    runs = [kmeans(SQUARE, 2, seed) for seed in range(20)]
    top = min(runs, key=lambda r: r.objective)
    assert top.objective == pytest.approx(1.0)
    assert _same_partition(top.assignments, np.array([0, 0, 1, 1]))


def test_single_cluster_is_the_mean():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(30, 3))
    result = kmeans(x, 1, seed=4)
    assert np.allclose(result.centers[0], x.mean(axis=0))
    assert result.objective == pytest.approx(((x - x.mean(axis=0)) ** 2).sum())
    assert result.assignments.tolist() == [0] * 30


def test_one_cluster_per_point():
    x = np.random.default_rng(1).normal(size=(6, 2))
    result = kmeans(x, 6, seed=0)
    assert result.objective == 0.0
    assert sorted(result.assignments.tolist()) == list(range(6))


def test_wcss_never_increases_over_random_runs():
    rng = np.random.default_rng(2024)
    for run in range(1000):
        n = int(rng.integers(5, 31))
        d = int(rng.integers(1, 5))
        k = int(rng.integers(1, min(5, n) + 1))
        x = rng.normal(size=(n, d)) * rng.uniform(0.1, 10.0)
        result = kmeans(x, k, seed=run)
        trace = np.array(result.trace)
        assert np.all(np.diff(trace) <= 1e-9 * max(trace[0], 1.0))
        residual = ((x - result.centers[result.assignments]) ** 2).sum()
        assert result.objective == pytest.approx(residual)


def test_every_point_sits_with_its_nearest_center():
    x, _ = make_blobs(n_samples=120, centers=5, n_features=3, random_state=7)
    for seed in range(10):
        result = kmeans(x, 5, seed)
        d2 = ((x[:, None, :] - result.centers[None, :, :]) ** 2).sum(axis=2)
        assert np.all(d2[np.arange(len(x)), result.assignments] <= d2.min(axis=1) * (1 + 1e-12) + 1e-12)
        assert np.all(result.cluster_sizes() > 0)


def test_kmeans_plus_plus_init():
    runs = [kmeans(SQUARE, 2, seed, init="k-means++") for seed in range(10)]
    assert min(r.objective for r in runs) == pytest.approx(1.0)


def test_kmeans_is_deterministic_per_seed():
    x, _ = make_blobs(n_samples=80, centers=3, random_state=1)
    a = kmeans(x, 3, seed=42)
    b = kmeans(x, 3, seed=42)
    assert a.objective == b.objective
    assert np.array_equal(a.assignments, b.assignments)


def test_kmeans_rejects_bad_input():
    with pytest.raises(ClusteringError, match="between 1 and n"):
        kmeans(SQUARE, 5, seed=0)
    with pytest.raises(ClusteringError, match="between 1 and n"):
        kmeans(SQUARE, 0, seed=0)
    with pytest.raises(ClusteringError, match="distinct rows"):
        kmeans(np.array([[0.0], [0.0], [1.0]]), 3, seed=0)
    with pytest.raises(ClusteringError, match="non-finite"):
        kmeans(np.array([[0.0], [np.nan]]), 1, seed=0)
    with pytest.raises(ClusteringError, match="unknown init"):
        kmeans(SQUARE, 2, seed=0, init="random")


# ---------- PAM ----------

def test_pam_line_fixture():
    points = np.array([[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]])
    d = squareform(pdist(points))
    solution = pam(d, 2)
    assert solution.medoids.tolist() == [1, 4]
    assert solution.objective == pytest.approx(4.0)
    assert solution.assignments.tolist() == [0, 0, 0, 1, 1, 1]
    assert _brute_force_medoids(d, 2) == pytest.approx(4.0)


def test_pam_degenerate_cases():
    d = squareform(pdist(np.random.default_rng(3).normal(size=(5, 2))))
    full = pam(d, 5)
    assert full.medoids.tolist() == [0, 1, 2, 3, 4]
    assert full.objective == 0.0

    twins = pam(np.zeros((2, 2)), 1)
    assert twins.medoids.tolist() == [0]
    assert twins.objective == 0.0


def test_pam_close_to_brute_force_on_random_instances():
    rng = np.random.default_rng(99)
    for _ in range(200):
        n = int(rng.integers(3, 10))
        k = int(rng.integers(1, min(3, n - 1) + 1))
        centers = rng.uniform(0.0, 20.0, size=(k, 2))
        points = centers[rng.integers(k, size=n)] + rng.normal(size=(n, 2))
        d = squareform(pdist(points))
        optimum = _brute_force_medoids(d, k)
        assert pam(d, k).objective <= optimum * 1.05 + 1e-12


def test_pam_exact_on_separated_blobs():
    rng = np.random.default_rng(5)
    for _ in range(50):
        k = int(rng.integers(1, 4))
        sizes = rng.multinomial(int(rng.integers(k, 10)) - k, np.ones(k) / k) + 1
        points = np.vstack([
            c * 100.0 + rng.uniform(0.0, 1.0, size=(size, 2))
            for c, size in enumerate(sizes)
        ])
        d = squareform(pdist(points))
        assert pam(d, k).objective == pytest.approx(_brute_force_medoids(d, k), abs=1e-9)


def test_pam_swaps_strictly_decrease():
    d = squareform(pdist(np.random.default_rng(8).normal(size=(40, 3))))
    solution = pam(d, 4)
    assert np.all(np.diff(solution.trace) < 0)
    assert solution.trace[-1] == pytest.approx(solution.objective)
    assert solution.assignments[solution.medoids].tolist() == [0, 1, 2, 3]


def test_pam_rejects_invalid_dissimilarity():
    with pytest.raises(ClusteringError, match="not symmetric"):
        pam(np.array([[0.0, 1.0], [2.0, 0.0]]), 1)
    with pytest.raises(ClusteringError, match="non-zero diagonal"):
        pam(np.array([[1.0, 1.0], [1.0, 0.0]]), 1)
    with pytest.raises(ClusteringError, match="negative"):
        pam(np.array([[0.0, -1.0], [-1.0, 0.0]]), 1)
    with pytest.raises(ClusteringError, match="between 1 and n"):
        pam(np.zeros((2, 2)), 3)


# ---------- CLARA ----------

def test_clara_on_the_full_sample_is_pam():
    x = np.random.default_rng(12).normal(size=(30, 2))
    result = clara(x, 3, samples=3, sample_size=30, seed=1)
    reference = pam(squareform(pdist(x)), 3)
    assert result.centers.tolist() == reference.medoids.tolist()
    assert result.objective == pytest.approx(reference.objective / 30)
    assert _same_partition(result.assignments, reference.assignments)


def test_clara_keeps_blobs_together():
    x, truth = make_blobs(n_samples=300, centers=[[0, 0], [20, 0], [0, 20]], cluster_std=0.5, random_state=0)
    result = clara(x, 3, samples=5, seed=2)
    assert _same_partition(result.assignments, truth)
    assert len(result.trace) == 5
    assert result.objective == min(result.trace)


def test_clara_is_deterministic_per_seed():
    x, _ = make_blobs(n_samples=200, centers=4, random_state=3)
    a = clara(x, 4, seed=9)
    b = clara(x, 4, seed=9)
    assert np.array_equal(a.centers, b.centers)
    assert np.array_equal(a.assignments, b.assignments)


def test_clara_sample_size_bounds():
    x = np.random.default_rng(0).normal(size=(20, 2))
    assert default_sample_size(20, 3) == 20
    assert default_sample_size(1000, 3) == 46
    with pytest.raises(ClusteringError, match="must exceed k"):
        clara(x, 3, sample_size=3)
    with pytest.raises(ClusteringError, match="exceeds n"):
        clara(x, 3, sample_size=21)
    with pytest.raises(ClusteringError, match="samples"):
        clara(x, 3, samples=0)


# ---------- SWEEP ----------

def test_derive_seed_is_a_pure_function():
    assert derive_seed(0, Algorithm.KMEANS, 3, 7) == derive_seed(0, Algorithm.KMEANS, 3, 7)
    seeds = {
        derive_seed(base, algorithm, k, r)
        for base in (0, 1)
        for algorithm in Algorithm
        for k in (2, 3)
        for r in (0, 1)
    }
    assert len(seeds) == 16


@pytest.mark.parametrize("algorithm", list(Algorithm))
def test_sweep_keeps_the_best_restart(algorithm):
    x, _ = make_blobs(n_samples=90, centers=3, random_state=4)
    report = sweep(x, algorithm, SweepConfig(k_min=2, k_max=5, restarts=6), workers=1)

    assert report.ks == [2, 3, 4, 5]
    for k in report.ks:
        entry = report.entries[k]
        assert entry.result.k == k
        assert entry.result.objective == min(entry.restart_objectives)
        assert entry.restart_index == entry.restart_objectives.index(min(entry.restart_objectives))
        assert entry.result.seed == derive_seed(0, algorithm, k, entry.restart_index)


def test_sweep_does_not_depend_on_worker_count():
    x, _ = make_blobs(n_samples=60, centers=3, random_state=6)
    settings = SweepConfig(k_min=2, k_max=4, restarts=4, base_seed=3)
    serial = sweep(x, Algorithm.KMEANS, settings, workers=1)
    parallel = sweep(x, Algorithm.KMEANS, settings, workers=2)
    for k in serial.ks:
        assert serial.entries[k].restart_objectives == parallel.entries[k].restart_objectives
        assert np.array_equal(serial.result(k).assignments, parallel.result(k).assignments)
    assert serial.records() == parallel.records()


def test_kmeans_sweep_objective_falls_with_k_on_planted_blobs():
    x, _ = make_blobs(n_samples=150, centers=4, cluster_std=0.6, random_state=2)
    report = sweep(x, Algorithm.KMEANS, SweepConfig(k_min=2, k_max=6, restarts=10), workers=1)
    objectives = [report.result(k).objective for k in report.ks]
    assert all(a >= b for a, b in zip(objectives, objectives[1:]))


def test_sweep_records_infinite_calinski_as_none():
    x = np.array([[0.0], [1.0], [10.0], [11.0]])
    report = sweep(x, Algorithm.KMEANS, SweepConfig(k_min=2, k_max=4, restarts=3), workers=1)
    records = report.records({2: "assignments/kmeans_k2.csv"})
    assert [r.k for r in records] == [2, 3, 4]
    assert records[0].assignment_file == "assignments/kmeans_k2.csv"
    assert records[0].calinski == pytest.approx(200.0)
    assert records[2].calinski is None
    assert records[2].silhouette == 0.0


def test_sweep_rejects_k_above_n():
    with pytest.raises(ClusteringError, match="exceeds n"):
        sweep(SQUARE, Algorithm.KMEANS, SweepConfig(k_min=2, k_max=5, restarts=1), workers=1)


def test_sweep_skips_k_above_the_distinct_rows(caplog):
    x = np.repeat(np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]]), 2, axis=0)
    report = sweep(x, Algorithm.KMEANS, SweepConfig(k_min=2, k_max=5, restarts=2), workers=1)
    assert report.ks == [2, 3]
    assert report.skipped_ks == (4, 5)
    assert report.summary().skipped_ks == [4, 5]
    assert report.result(3).objective == 0.0
    assert "only 3 distinct rows" in caplog.text

    with pytest.raises(ClusteringError, match="3 distinct rows"):
        sweep(x, Algorithm.KMEANS, SweepConfig(k_min=4, k_max=5, restarts=1), workers=1)


def test_report_lookup_outside_the_sweep():
    report = sweep(SQUARE, Algorithm.KMEANS, SweepConfig(k_min=2, k_max=3, restarts=1), workers=1)
    with pytest.raises(ClusteringError, match="no result for k=9"):
        report.result(9)
