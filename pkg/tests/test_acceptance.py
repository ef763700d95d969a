"""End-to-end checks on planted data: k selection, group recovery, labeling."""

import time

import numpy as np
import pytest
from sklearn.datasets import make_blobs

from segmint.core.cluster_engine import sweep
from segmint.core.personality import characterize_groups, load_reference_ranking
from segmint.core.preprocess import load_stage, run_preprocessing, scale
from segmint.core.profiling import match_groups, profile_clustering
from segmint.core.synthgen import default_group_specs
from segmint.core.tabular import to_matrix
from segmint.core.validation import select_best_k
from segmint.schemas import Algorithm, GroupLabel, PreprocessConfig, SweepConfig, Verdict

from tests.conftest import planted_signature


def _four_gaussians():
    centers = 10.0 * np.eye(4, 5)
    x, _ = make_blobs(n_samples=[200] * 4, centers=centers, cluster_std=1.0, random_state=0)
    return x


def _stage_c(population):
    table, truth = population
    clean, _ = run_preprocessing(table, PreprocessConfig(), load_stage("C"))
    assert clean.n_rows == len(truth)
    return clean, truth


# ---------- MODEL SELECTION ----------

@pytest.mark.parametrize("algorithm", list(Algorithm))
@pytest.mark.parametrize("base_seed", range(10))
def test_four_planted_gaussians_agree_on_four(algorithm, base_seed):
    report = sweep(_four_gaussians(), algorithm,
                   SweepConfig(k_min=2, k_max=8, restarts=100, base_seed=base_seed), workers=1)
    selection = select_best_k(report)
    assert selection.verdict is Verdict.AGREED
    assert selection.k_lo == 4


# ---------- PLANTED GROUPS ----------

def test_ground_truth_partition_shows_every_planted_signature(clean_population):
    clean, truth = _stage_c(clean_population)
    _, profiles = profile_clustering(clean, truth, tau=0.5, stage="C", algorithm="truth")
    found = {p.cluster_id: p.signed_markers() for p in profiles}
    for spec in default_group_specs():
        assert found[spec.group_id] == planted_signature(spec), spec.group_id
    assert found[2] == {"income-", "carvalue-", "travel+"}


def test_two_views_of_the_planted_groups_match_into_six(clean_population):
    clean, truth = _stage_c(clean_population)
    rows = np.arange(clean.n_rows)
    profiles = []
    for name, half in (("even", rows[::2]), ("odd", rows[1::2])):
        _, found = profile_clustering(clean.take(half), truth[half], tau=0.5, stage="C", algorithm=name)
        profiles.extend(found)

    matching = match_groups(profiles, threshold=0.5)
    assert len(matching.groups) == 6
    assert {(m.algorithm, m.cluster_id) for m in matching.unmatched} == {("even", 0), ("odd", 0)}
    signatures = {frozenset(f"{a}{m.value}" for a, m in g.signature.items()) for g in matching.groups}
    assert signatures == {planted_signature(s) for s in default_group_specs()[1:]}


def test_planted_groups_get_the_reference_labels(clean_population):
    clean, truth = _stage_c(clean_population)
    _, profiles = profile_clustering(clean, truth, tau=0.5, stage="C", algorithm="truth")
    matching = match_groups(profiles)
    labeled = characterize_groups(matching.groups, load_reference_ranking(), epsilon=0.1)
    by_signature = {frozenset(g.signed_markers()): g.label for g in labeled}

    assert by_signature[frozenset({"udebt+", "travel+"})] is GroupLabel.SELFISH
    assert by_signature[frozenset({"income-", "carvalue-", "travel+"})] is GroupLabel.SELFISH
    assert by_signature[frozenset({"hvalue+", "finasset+", "priority+"})] is GroupLabel.NON_SELFISH


@pytest.mark.slow
def test_clusterings_recover_the_planted_groups(clean_population):
    clean, _ = _stage_c(clean_population)
    matrix = scale(to_matrix(clean)[0])
    settings = SweepConfig(k_min=7, k_max=7, restarts=100, clara_sample_size=200)
    planted = {planted_signature(s) for s in default_group_specs()[1:]}

    profiles = []
    for algorithm in Algorithm:
        report = sweep(matrix, algorithm, settings)
        _, found = profile_clustering(clean, report.result(7).assignments, stage="C", algorithm=algorithm.value)
        profiles.extend(found)
        if algorithm is Algorithm.KMEANS:
            assert len(planted & {p.signed_markers() for p in found}) >= 5

    assert len(match_groups(profiles).groups) == 6


# ---------- SCALE ----------

@pytest.mark.slow
def test_sweep_at_scale_finishes_in_time():
    x, _ = make_blobs(n_samples=5000, n_features=25, centers=6, random_state=1)
    started = time.monotonic()
    for algorithm in Algorithm:
        report = sweep(x, algorithm, SweepConfig(k_min=2, k_max=20, restarts=100))
        assert report.ks == list(range(2, 21))
    assert time.monotonic() - started < 600
