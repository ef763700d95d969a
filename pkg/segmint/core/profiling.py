"""
Cluster Profiling
==================
Turns clusterings into readable Behavioural Groups:

1. PCA projection onto the first components (biplot coordinates)
2. Per-cluster five-number summaries + mean (type-7 linear quantiles)
3. Expression markers: a cluster attribute is "+" when its median sits at
   least tau global IQRs above the global median, "-" when tau below
4. Matching: profiles from different clusterings are merged greedily by
   Jaccard similarity of their signed marker sets

Profiles with no marker at all carry no group signature; they are reported
as unmatched instead of forming an empty group.
"""

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from sklearn.decomposition import PCA

from segmint.core.tabular import DataTable, to_matrix
from segmint.errors import ProfilingError
from segmint.schemas import (
    BehaviouralGroup,
    ExpressionProfile,
    GroupMatching,
    Marker,
    MemberRef,
)

logger = logging.getLogger(__name__)

GLOBAL_CLUSTER = -1
STAT_COLUMNS = ["cluster", "attribute", "min", "q1", "median", "q3", "max", "mean", "n"]
IQR_FLOOR = float(np.finfo(float).eps)


# ---------- PCA ----------

@dataclass(frozen=True)
class PcaProjection:
    scores: np.ndarray
    loadings: np.ndarray
    explained_variance: np.ndarray
    explained_variance_ratio: np.ndarray


def pca_project(matrix, components: int = 2) -> PcaProjection:
    """
    Project rows onto the leading principal components.

    Args:
        matrix: n x d matrix, centered internally
        components: Number of components kept

    Returns:
        PcaProjection with n x c scores, d x c orthonormal loadings and
        non-increasing explained variances (sample variance, n - 1)
    """
    x = np.asarray(matrix, dtype="float64")
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 2:
        raise ProfilingError(f"PCA needs n >= 2 rows and d >= 2 columns, got shape {x.shape}")
    if not 1 <= components <= min(x.shape):
        raise ProfilingError(f"components={components} must be between 1 and min(n, d)={min(x.shape)}")

    pca = PCA(n_components=components, svd_solver="full").fit(x)
    return PcaProjection(
        scores=pca.transform(x),
        loadings=pca.components_.T.copy(),
        explained_variance=pca.explained_variance_.copy(),
        explained_variance_ratio=pca.explained_variance_ratio_.copy(),
    )


# ---------- BOX STATISTICS ----------

@dataclass(frozen=True)
class BoxStats:
    """Long-format summary: one row per (cluster, attribute)."""
    frame: pd.DataFrame

    @property
    def clusters(self) -> list[int]:
        return sorted(self.frame["cluster"].unique().tolist())

    @property
    def attributes(self) -> list[str]:
        return list(dict.fromkeys(self.frame["attribute"]))

    def stat(self, name: str) -> pd.DataFrame:
        """cluster x attribute table of one statistic."""
        wide = self.frame.pivot(index="cluster", columns="attribute", values=name)
        return wide[self.attributes]

    def row(self, cluster: int, attribute: str) -> pd.Series:
        match = self.frame[(self.frame["cluster"] == cluster) & (self.frame["attribute"] == attribute)]
        if match.empty:
            raise ProfilingError(f"no statistics for cluster {cluster}, attribute {attribute!r}")
        return match.iloc[0]


def cluster_summary(matrix, assignments, columns: Optional[Sequence[str]] = None) -> BoxStats:
    """
    Five-number summary and mean for every (cluster, attribute).

    Args:
        matrix: n x d matrix
        assignments: Cluster id per row
        columns: Attribute names; x0, x1, ... when None

    Returns:
        BoxStats ordered by cluster, then attribute in column order
    """
    x = np.asarray(matrix, dtype="float64")
    labels = np.asarray(assignments, dtype=np.int64)
    if x.ndim != 2 or labels.shape != (x.shape[0],):
        raise ProfilingError(f"{labels.shape} assignments do not match matrix shape {x.shape}")
    names = list(columns) if columns is not None else [f"x{j}" for j in range(x.shape[1])]
    if len(names) != x.shape[1]:
        raise ProfilingError(f"{len(names)} column names for {x.shape[1]} columns")

    frame = pd.DataFrame(x, columns=names)
    grouped = frame.groupby(labels, sort=True)
    parts = {
        "min": grouped.min(),
        "q1": grouped.quantile(0.25, interpolation="linear"),
        "median": grouped.quantile(0.5, interpolation="linear"),
        "q3": grouped.quantile(0.75, interpolation="linear"),
        "max": grouped.max(),
        "mean": grouped.mean(),
    }
    long = pd.concat({name: part.stack() for name, part in parts.items()}, axis=1)
    long.index = long.index.set_names(["cluster", "attribute"])
    long = long.reset_index()
    sizes = grouped.size()
    long["n"] = long["cluster"].map(sizes).astype(np.int64)
    long["cluster"] = long["cluster"].astype(np.int64)
    return BoxStats(long[STAT_COLUMNS].reset_index(drop=True))


def global_summary(matrix, columns: Optional[Sequence[str]] = None) -> BoxStats:
    """Population summary, reported under cluster id -1."""
    x = np.asarray(matrix, dtype="float64")
    stats = cluster_summary(x, np.zeros(x.shape[0], dtype=np.int64), columns)
    frame = stats.frame.copy()
    frame["cluster"] = GLOBAL_CLUSTER
    return BoxStats(frame)


# ---------- EXPRESSION MARKERS ----------

def expression_markers(stats: BoxStats, global_stats: BoxStats, tau: float = 0.5,
                       stage: str = "", algorithm: str = "") -> list[ExpressionProfile]:
    """
    Signed markers per cluster.

    effect = (cluster median - global median) / max(global IQR, eps);
    "+" when effect >= tau, "-" when effect <= -tau, "0" otherwise.
    """
    if not tau > 0:
        raise ProfilingError(f"tau={tau} must be positive")

    global_median = global_stats.stat("median").iloc[0]
    global_iqr = (global_stats.stat("q3") - global_stats.stat("q1")).iloc[0]
    scale = np.maximum(global_iqr.to_numpy(dtype="float64"), IQR_FLOOR)

    medians = stats.stat("median")
    sizes = stats.stat("n")
    missing = [a for a in medians.columns if a not in global_median.index]
    if missing:
        raise ProfilingError(f"global statistics lack attribute {missing[0]!r}")
    global_median = global_median[medians.columns].to_numpy(dtype="float64")
    scale = pd.Series(scale, index=global_iqr.index)[medians.columns].to_numpy()

    profiles = []
    for cluster, row in medians.iterrows():
        effect = (row.to_numpy(dtype="float64") - global_median) / scale
        markers = {}
        for attribute, value in zip(medians.columns, effect):
            if value >= tau:
                markers[attribute] = Marker.OVER
            elif value <= -tau:
                markers[attribute] = Marker.UNDER
            else:
                markers[attribute] = Marker.NEUTRAL
        profiles.append(ExpressionProfile(
            cluster_id=int(cluster),
            stage=stage,
            algorithm=algorithm,
            size=int(sizes.loc[cluster].iloc[0]),
            markers=markers,
            effect={a: float(v) for a, v in zip(medians.columns, effect)},
        ))
    return profiles


def profile_clustering(table: DataTable, assignments, tau: float = 0.5, stage: str = "",
                       algorithm: str = "") -> tuple[BoxStats, list[ExpressionProfile]]:
    """Summary and markers of one clustering of an all-numeric table."""
    matrix, names = to_matrix(table)
    stats = cluster_summary(matrix, assignments, names)
    profiles = expression_markers(stats, global_summary(matrix, names), tau, stage, algorithm)
    for profile in profiles:
        logger.info(f"[PROFILE] {algorithm or '-'} cluster {profile.cluster_id} (n={profile.size}): "
                    f"{sorted(profile.signed_markers()) or 'no markers'}")
    return stats, profiles


# ---------- GROUP MATCHING ----------

def jaccard(a: frozenset, b: frozenset) -> float:
    union = a | b
    return len(a & b) / len(union) if union else 0.0


def _tokens_to_signature(tokens) -> dict[str, Marker]:
    signs: dict[str, set[str]] = {}
    for token in tokens:
        signs.setdefault(token[:-1], set()).add(token[-1])
    return {a: Marker(next(iter(s))) for a, s in sorted(signs.items()) if len(s) == 1}


def group_signature(member_sets: Sequence[frozenset]) -> dict[str, Marker]:
    """
    Shared signed markers of a set of profiles.

    Intersection first; when it is empty, markers held by a strict majority
    of members; when none, the most frequent markers. Attributes seen with
    both signs are left out.
    """
    common = frozenset.intersection(*member_sets)
    if common:
        return _tokens_to_signature(common)
    counts = pd.Series([t for s in member_sets for t in sorted(s)], dtype=object).value_counts()
    if counts.empty:
        return {}
    majority = [t for t, c in counts.items() if c * 2 > len(member_sets)]
    if majority:
        return _tokens_to_signature(majority)
    return _tokens_to_signature([t for t, c in counts.items() if c == counts.max()])


def _signed(signature: dict[str, Marker]) -> frozenset:
    return frozenset(f"{a}{m.value}" for a, m in signature.items())


def match_groups(profiles: Sequence[ExpressionProfile], threshold: float = 0.5) -> GroupMatching:
    """
    Merge profiles from several clusterings into Behavioural Groups.

    Profile pairs are visited by descending Jaccard similarity (lowest
    profile indices first on ties). Two groups merge when the Jaccard
    similarity of their signatures reaches the threshold and every member
    of the merged group still overlaps the merged signature at the
    threshold.

    Args:
        profiles: Expression profiles, in a fixed order
        threshold: Minimum Jaccard similarity, in (0, 1]

    Returns:
        GroupMatching with 1-based group ids ordered by first member
    """
    if not profiles:
        raise ProfilingError("match_groups needs at least one profile")
    if not 0 < threshold <= 1:
        raise ProfilingError(f"threshold={threshold} not in (0, 1]")

    sets = [p.signed_markers() for p in profiles]
    refs = [MemberRef(stage=p.stage, algorithm=p.algorithm, cluster_id=p.cluster_id) for p in profiles]
    marked = [i for i, s in enumerate(sets) if s]
    unmatched = [refs[i] for i, s in enumerate(sets) if not s]

    owner = {i: i for i in marked}
    members = {i: [i] for i in marked}
    signature = {i: group_signature([sets[i]]) for i in marked}

    pairs = sorted(
        ((jaccard(sets[i], sets[j]), i, j) for i, j in combinations(marked, 2)),
        key=lambda t: (-t[0], t[1], t[2]),
    )
    for similarity, i, j in pairs:
        if similarity < threshold:
            break
        gi, gj = owner[i], owner[j]
        if gi == gj:
            continue
        if jaccard(_signed(signature[gi]), _signed(signature[gj])) < threshold:
            continue
        merged = sorted(members[gi] + members[gj])
        merged_signature = group_signature([sets[m] for m in merged])
        if not merged_signature:
            continue
        if any(jaccard(sets[m], _signed(merged_signature)) < threshold for m in merged):
            continue
        keep, drop = min(gi, gj), max(gi, gj)
        members[keep] = merged
        signature[keep] = merged_signature
        for m in members.pop(drop):
            owner[m] = keep
        signature.pop(drop)

    groups = [
        BehaviouralGroup(
            group_id=number,
            signature=signature[root],
            members=[refs[m] for m in members[root]],
        )
        for number, root in enumerate(sorted(members), start=1)
    ]
    logger.info(f"[PROFILE] {len(profiles)} profiles matched into {len(groups)} groups, "
                f"{len(unmatched)} without markers")
    return GroupMatching(groups=groups, unmatched=unmatched)
