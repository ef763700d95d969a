"""
Pydantic Schema Definitions
============================
Serializable records shared across the pipeline: column schemas, stage
definitions, run/sweep configuration, preprocessing logs, sweep reports,
expression profiles, Behavioural Groups, selfishness rankings, and the
synthetic group specifications.

Numeric working objects (DataTable, ClusteringResult, BoxStats, ...) live
next to the code that builds them in `segmint.core`; everything here is
what ends up in a JSON file.

Note: list-valued configuration fields are sorted and de-duplicated on
validation so that two equal configs always serialize byte-identically.
"""

import math
import re
from enum import Enum
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def _snake(value):
    """Accept 'UnsecuredDebt' / 'Numeric' spellings for enum values."""
    if isinstance(value, str):
        return re.sub(r"(?<!^)(?=[A-Z])", "_", value.strip()).replace("__", "_").lower()
    return value


# ---------- ENUMS ----------

class AttributeKind(str, Enum):
    NUMERIC = "numeric"
    NOMINAL = "nominal"


class AttributeCategory(str, Enum):
    DEMOGRAPHICS = "demographics"
    UNSECURED_DEBT = "unsecured_debt"
    ASSETS = "assets"
    EXPENDITURE = "expenditure"
    DEBT_DETAILS = "debt_details"
    INCOME = "income"
    IDENTIFIER = "identifier"


class Algorithm(str, Enum):
    KMEANS = "kmeans"
    CLARA = "clara"


class Marker(str, Enum):
    """Expression of an attribute inside a cluster."""
    OVER = "+"
    UNDER = "-"
    NEUTRAL = "0"


class GroupLabel(str, Enum):
    SELFISH = "Selfish"
    NON_SELFISH = "NonSelfish"
    UNLABELED = "Unlabeled"


class Normalization(str, Enum):
    NONE = "none"
    UNIT_MAX = "unit_max"
    ZSCORE = "zscore"


class Verdict(str, Enum):
    AGREED = "agreed"
    RANGE = "range"


# ---------- TABLE SCHEMA ----------

class ColumnSpec(BaseModel):
    """One column of a DataTable schema."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field(min_length=1, description="Column name, unique within a schema")
    kind: AttributeKind = Field(description="numeric or nominal")
    category: AttributeCategory = Field(description="CCCS attribute category")
    time: bool = Field(default=False, description="Contact-date column, always dropped by stage selection")
    description: str = Field(default="", description="Human-readable meaning and unit")

    @field_validator("kind", "category", mode="before")
    @classmethod
    def _normalize_enum(cls, value):
        return _snake(value)


class StageSpec(BaseModel):
    """Attribute subset used for one round of clustering experiments."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field(min_length=1, description="Stage name: A, B, C or custom")
    excluded_categories: tuple[AttributeCategory, ...] = Field(default=(), description="Categories dropped")
    excluded_columns: tuple[str, ...] = Field(default=(), description="Individual columns dropped")

    @field_validator("excluded_categories", mode="before")
    @classmethod
    def _normalize_categories(cls, value):
        return [_snake(v) for v in (value or [])]

    @field_validator("excluded_categories")
    @classmethod
    def _sort_categories(cls, value):
        return tuple(sorted(set(value), key=lambda c: c.value))

    @field_validator("excluded_columns")
    @classmethod
    def _sort_columns(cls, value):
        return tuple(sorted(set(value)))


# ---------- PREPROCESSING ----------

class PrunedPair(BaseModel):
    kept: str = Field(description="Schema-earlier column that survives")
    removed: str = Field(description="Column removed for near-duplicate information")
    r: float = Field(description="Pearson correlation between the two")


class PreprocessLog(BaseModel):
    """Everything the cleaning pipeline did to a table."""
    dropped_duplicate_ids: list[float | str] = Field(default_factory=list, description="Ids occurring more than once")
    dropped_duplicate_rows: int = Field(default=0, description="Rows removed by duplicate handling")
    dropped_sparse_rows: int = Field(default=0, description="Rows removed for excessive missingness")
    dropped_columns: list[str] = Field(default_factory=list, description="Columns removed before cleaning")
    imputed_cells: dict[str, int] = Field(default_factory=dict, description="Imputed cell count per column")
    pruned_pairs: list[PrunedPair] = Field(default_factory=list, description="Correlation pruning decisions")
    skipped_constant_columns: list[str] = Field(default_factory=list, description="Constant columns ignored by pruning")
    encoded_columns: dict[str, dict[str, int]] = Field(default_factory=dict, description="Nominal label to code maps")
    stage: Optional[str] = Field(default=None, description="Stage applied, if any")
    stage_dropped_columns: list[str] = Field(default_factory=list, description="Columns removed by stage selection")
    rows_in: Optional[int] = Field(default=None, description="Rows entering the pipeline")
    rows_out: Optional[int] = Field(default=None, description="Rows leaving the pipeline")

    def merge(self, other: "PreprocessLog") -> "PreprocessLog":
        """Combine two step logs; later steps win for scalar fields."""
        imputed = dict(self.imputed_cells)
        for column, count in other.imputed_cells.items():
            imputed[column] = imputed.get(column, 0) + count
        encoded = dict(self.encoded_columns)
        encoded.update(other.encoded_columns)
        return PreprocessLog(
            dropped_duplicate_ids=self.dropped_duplicate_ids + other.dropped_duplicate_ids,
            dropped_duplicate_rows=self.dropped_duplicate_rows + other.dropped_duplicate_rows,
            dropped_sparse_rows=self.dropped_sparse_rows + other.dropped_sparse_rows,
            dropped_columns=self.dropped_columns + other.dropped_columns,
            imputed_cells=imputed,
            pruned_pairs=self.pruned_pairs + other.pruned_pairs,
            skipped_constant_columns=self.skipped_constant_columns + other.skipped_constant_columns,
            encoded_columns=encoded,
            stage=other.stage if other.stage is not None else self.stage,
            stage_dropped_columns=self.stage_dropped_columns + other.stage_dropped_columns,
            rows_in=self.rows_in if self.rows_in is not None else other.rows_in,
            rows_out=other.rows_out if other.rows_out is not None else self.rows_out,
        )


class PreprocessConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id_column: str = Field(default="pid", description="Client identifier column")
    keep_first_duplicate: bool = Field(default=False, description="Keep first copy of a duplicated id instead of all-copies removal")
    max_missing_fraction: float = Field(default=0.5, ge=0.0, le=1.0, description="Rows missing more than this fraction are dropped")
    correlation_threshold: float = Field(default=0.95, gt=0.0, le=1.0, description="|r| above which the later column is pruned")
    drop_columns: list[str] = Field(default_factory=lambda: ["occupation"], description="Columns removed up front")
    scale: bool = Field(default=True, description="Standardize the clustering matrix")


# ---------- CLUSTERING ----------

class SweepConfig(BaseModel):
    """Restart / k-sweep protocol parameters."""
    model_config = ConfigDict(extra="forbid")

    k_min: int = Field(default=2, ge=2, description="Smallest k swept")
    k_max: int = Field(default=20, ge=2, description="Largest k swept")
    restarts: int = Field(default=100, ge=1, description="Independent runs per k")
    base_seed: int = Field(default=0, ge=0, description="Root of the per-run seed hash")
    clara_samples: int = Field(default=5, ge=1, description="CLARA samples per run")
    clara_sample_size: Optional[int] = Field(default=None, ge=2, description="CLARA sample size; default min(n, 40 + 2k)")
    max_iterations: int = Field(default=100, ge=1, description="Lloyd iteration cap")
    tolerance: float = Field(default=1e-8, ge=0.0, description="Absolute WCSS improvement that stops Lloyd")
    init: Literal["forgy", "k-means++"] = Field(default="forgy", description="K-means initialization")

    @model_validator(mode="after")
    def _check_range(self):
        if self.k_min > self.k_max:
            raise ValueError(f"k_min={self.k_min} exceeds k_max={self.k_max}")
        return self


class SweepRecord(BaseModel):
    """Retained run for one (algorithm, k)."""
    algorithm: Algorithm
    k: int
    objective: float
    seed: int
    restart_index: int
    iterations: int
    silhouette: float
    calinski: Optional[float] = Field(default=None, description="None when within-cluster dispersion is zero")
    assignment_file: Optional[str] = Field(default=None, description="Relative path of the assignments CSV")


class SweepSummary(BaseModel):
    algorithm: Algorithm
    n_rows: int
    n_columns: int
    config: SweepConfig
    results: list[SweepRecord]
    skipped_ks: list[int] = Field(default_factory=list, description="k values above the number of distinct rows")


class KSelection(BaseModel):
    """Agreement between the two indices about the optimal k."""
    algorithm: Algorithm
    silhouette_k: int
    calinski_k: int
    verdict: Verdict
    k_lo: int
    k_hi: int

    @property
    def agreed_k(self) -> Optional[int]:
        return self.k_lo if self.verdict is Verdict.AGREED else None


# ---------- PROFILING ----------

class ExpressionProfile(BaseModel):
    """Signed markers of one cluster against the global population."""
    cluster_id: int
    stage: str = Field(default="", description="Stage the clustering ran on")
    algorithm: str = Field(default="", description="Algorithm that produced the cluster")
    size: int = Field(default=0, description="Cluster member count")
    markers: dict[str, Marker] = Field(description="attribute -> +, -, 0")
    effect: dict[str, float] = Field(description="attribute -> standardized median difference")

    def signed_markers(self) -> frozenset[str]:
        """Non-neutral markers as 'attribute+' / 'attribute-' tokens."""
        return frozenset(f"{a}{m.value}" for a, m in self.markers.items() if m is not Marker.NEUTRAL)


class MemberRef(BaseModel):
    model_config = ConfigDict(frozen=True)

    stage: str
    algorithm: str
    cluster_id: int


class BehaviouralGroup(BaseModel):
    group_id: int
    signature: dict[str, Marker] = Field(description="Signed attributes shared by the member clusters")
    members: list[MemberRef]
    label: GroupLabel = GroupLabel.UNLABELED
    selfishness_score: Optional[float] = Field(default=None, description="Signed sum of expenditure weights")

    def signed_markers(self) -> frozenset[str]:
        return frozenset(f"{a}{m.value}" for a, m in self.signature.items() if m is not Marker.NEUTRAL)


class GroupMatching(BaseModel):
    groups: list[BehaviouralGroup]
    unmatched: list[MemberRef] = Field(default_factory=list, description="Profiles with no marker at all")


# ---------- PERSONALITY ----------

class RankingEntry(BaseModel):
    attribute: str
    weight: float
    rank: int


class SelfishnessRanking(BaseModel):
    """Expenditure attributes ordered by selfishness weight."""
    normalization: Normalization = Normalization.NONE
    entries: list[RankingEntry]

    @model_validator(mode="after")
    def _check_order(self):
        keys = [(-e.weight, e.attribute) for e in self.entries]
        if keys != sorted(keys) or len({e.attribute for e in self.entries}) != len(keys):
            raise ValueError("ranking must be strictly descending by weight, ties by attribute name")
        return self

    @classmethod
    def from_weights(cls, weights: dict[str, float], normalization: Normalization = Normalization.NONE):
        ordered = sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))
        return cls(
            normalization=normalization,
            entries=[RankingEntry(attribute=a, weight=w, rank=i + 1) for i, (a, w) in enumerate(ordered)],
        )

    @property
    def weights(self) -> dict[str, float]:
        return {e.attribute: e.weight for e in self.entries}

    @property
    def order(self) -> list[str]:
        return [e.attribute for e in self.entries]


# ---------- SYNTHETIC DATA ----------

class AttributeDistribution(BaseModel):
    """Base distribution of one synthetic column."""
    model_config = ConfigDict(extra="forbid")

    family: Literal["sequence", "lognormal", "normal", "poisson", "uniform_int", "categorical", "share", "scaled"]
    median: float = Field(default=1.0, gt=0.0, description="lognormal median")
    sigma: float = Field(default=0.3, ge=0.0, description="lognormal log-scale sd")
    mean: float = Field(default=0.0, description="normal mean")
    sd: float = Field(default=1.0, ge=0.0, description="normal sd")
    rate: float = Field(default=1.0, gt=0.0, description="poisson rate")
    low: int = Field(default=0, description="uniform_int lower bound (inclusive)")
    high: int = Field(default=1, description="uniform_int upper bound (inclusive)")
    levels: list[str] = Field(default_factory=list, description="categorical labels")
    weights: Optional[list[float]] = Field(default=None, description="categorical probabilities")
    source: Optional[str] = Field(default=None, description="share/scaled: column derived from")
    factor: float = Field(default=1.0, description="scaled: multiplier on the source column")
    noise: float = Field(default=0.0, ge=0.0, description="scaled: multiplicative gaussian noise sd")
    lower: Optional[float] = Field(default=None, description="clip floor")
    upper: Optional[float] = Field(default=None, description="clip ceiling")
    decimals: Optional[int] = Field(default=None, ge=0, description="rounding applied last")

    @model_validator(mode="after")
    def _check_family(self):
        if self.family == "categorical":
            if not self.levels:
                raise ValueError("categorical distribution needs levels")
            if self.weights is not None and len(self.weights) != len(self.levels):
                raise ValueError("categorical weights must match levels")
        if self.family in ("share", "scaled") and not self.source:
            raise ValueError(f"{self.family} distribution needs a source column")
        if self.family == "uniform_int" and self.low > self.high:
            raise ValueError("uniform_int low exceeds high")
        return self


class GroupSpec(BaseModel):
    """One planted population of the synthetic generator."""
    model_config = ConfigDict(extra="forbid")

    group_id: int
    size: int = Field(ge=1, description="Rows drawn for this group")
    shifts: dict[str, float] = Field(default_factory=dict, description="attribute -> multiple of base IQR")
    description: str = ""

    @field_validator("shifts")
    @classmethod
    def _finite_shifts(cls, value):
        for attribute, shift in value.items():
            if not math.isfinite(shift):
                raise ValueError(f"shift for {attribute!r} is not finite")
        return value


# ---------- RUN CONFIG ----------

class RunConfig(BaseModel):
    """Everything needed to reproduce a CLI run."""
    model_config = ConfigDict(extra="forbid")

    input_path: Optional[str] = Field(default=None, description="Input CSV; pipeline generates one when absent")
    schema_path: Optional[str] = Field(default=None, description="Schema JSON; bundled CCCS schema when absent")
    stages: list[str] = Field(default_factory=lambda: ["C"],
                              description="Stages run in order (A, B, C, or names inside stage_path); "
                                          "their profiles are matched together")
    stage_path: Optional[str] = Field(default=None, description="Custom StageSpec JSON")
    algorithms: list[Algorithm] = Field(default_factory=lambda: [Algorithm.KMEANS, Algorithm.CLARA])
    k_min: int = Field(default=2, ge=2)
    k_max: int = Field(default=20, ge=2)
    restarts: int = Field(default=100, ge=1)
    clara_samples: int = Field(default=5, ge=1)
    clara_sample_size: Optional[int] = Field(default=None, ge=2)
    max_iterations: int = Field(default=100, ge=1)
    tolerance: float = Field(default=1e-8, ge=0.0)
    init: Literal["forgy", "k-means++"] = "forgy"
    preprocess: PreprocessConfig = Field(default_factory=PreprocessConfig)
    tau: float = Field(default=0.5, gt=0.0, description="Marker threshold in global IQR units")
    jaccard_threshold: float = Field(default=0.5, gt=0.0, le=1.0, description="Profile merge threshold")
    epsilon: float = Field(default=0.1, ge=0.0, description="Selfishness dead zone")
    normalization: Normalization = Normalization.NONE
    ignore_unrated: bool = Field(default=True, description="Warn instead of failing on unrated expenditure markers")
    ratings_path: Optional[str] = Field(default=None, description="Ratings CSV; bundled reference ranking when absent")
    groups_path: Optional[str] = Field(default=None, description="GroupSpec JSON for generate")
    n_groups_rows: Optional[int] = Field(default=None, ge=1, description="Override size of every generated group")
    missing_rate: float = Field(default=0.01, ge=0.0, lt=1.0)
    duplicate_rate: float = Field(default=0.02, ge=0.0, lt=1.0)
    output_dir: str = Field(default="segmint-out")
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="before")
    @classmethod
    def _single_stage(cls, data):
        """Accept the single-stage form `"stage": "B"` as well."""
        if isinstance(data, dict) and "stage" in data:
            if "stages" in data:
                raise ValueError("give either 'stage' or 'stages', not both")
            data = dict(data)
            stage = data.pop("stage")
            data["stages"] = [stage] if isinstance(stage, str) else stage
        return data

    @field_validator("stages")
    @classmethod
    def _check_stages(cls, value):
        if not value:
            raise ValueError("at least one stage is required")
        if len(set(value)) != len(value):
            raise ValueError(f"stages {value} repeat a stage")
        for name in value:
            if not name or name in (".", "..") or any(c in name for c in "/\\"):
                raise ValueError(f"stage name {name!r} cannot be used as a directory name")
        return value

    @field_validator("algorithms")
    @classmethod
    def _dedupe_algorithms(cls, value):
        if not value:
            raise ValueError("at least one algorithm is required")
        return sorted(set(value), key=lambda a: a.value)

    @model_validator(mode="after")
    def _check_range(self):
        if self.k_min > self.k_max:
            raise ValueError(f"k_min={self.k_min} exceeds k_max={self.k_max}")
        return self

    def sweep_config(self) -> SweepConfig:
        return SweepConfig(
            k_min=self.k_min,
            k_max=self.k_max,
            restarts=self.restarts,
            base_seed=self.seed,
            clara_samples=self.clara_samples,
            clara_sample_size=self.clara_sample_size,
            max_iterations=self.max_iterations,
            tolerance=self.tolerance,
            init=self.init,
        )

    def manifest(self) -> dict:
        """Location-independent form written into every artifact directory."""
        return self.model_dump(mode="json", exclude={"output_dir"})
