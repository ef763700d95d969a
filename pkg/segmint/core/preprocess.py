"""
Preprocessing Module
=====================
Cleaning pipeline applied before any clustering:

1. Up-front column removal (occupation by default; half its cells are missing)
2. Duplicate removal: every row whose client id occurs more than once goes
3. Missing-heavy row filter
4. Mean (numeric) / mode (nominal) imputation
5. Pearson correlation pruning at |r| > threshold, schema-earlier column kept
6. Nominal encoding: integer codes in lexicographic label order
7. Stage selection (A, B, C or custom), identifier and time columns dropped
8. Optional column standardization of the clustering matrix

Every step is a pure function from table to (table, PreprocessLog); the
order is fixed and running the whole chain on its own output is a no-op.
"""

import json
import logging
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import TypeAdapter, ValidationError
from scipy import stats

from segmint.core.tabular import DataTable
from segmint.errors import PreprocessError
from segmint.schemas import (
    AttributeCategory,
    AttributeKind,
    PreprocessConfig,
    PreprocessLog,
    PrunedPair,
    StageSpec,
)

logger = logging.getLogger(__name__)

_STAGES_ADAPTER = TypeAdapter(list[StageSpec])


# ---------- STAGES ----------

def builtin_stages() -> dict[str, StageSpec]:
    """Stages A, B and C shipped with the package."""
    text = resources.files("segmint").joinpath("data", "stages.json").read_text(encoding="utf-8")
    return {stage.name: stage for stage in _STAGES_ADAPTER.validate_json(text)}


def load_stage(name: str, path: Optional[str | Path] = None) -> StageSpec:
    """
    Resolve a stage by name.

    Args:
        name: Stage name (A, B, C, or a name defined in the file)
        path: Optional StageSpec JSON (one object or a list); its stages
              take precedence over the built-in ones

    Returns:
        The matching StageSpec
    """
    stages = builtin_stages()
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
            items = raw if isinstance(raw, list) else [raw]
            for stage in _STAGES_ADAPTER.validate_python(items):
                stages[stage.name] = stage
        except (OSError, json.JSONDecodeError, ValidationError) as e:
            raise PreprocessError(f"cannot load stage file {path}: {e}") from e

    if name not in stages:
        raise PreprocessError(f"unknown stage {name!r}; known stages: {', '.join(sorted(stages))}")
    return stages[name]


# ---------- COLUMN / ROW REMOVAL ----------

def drop_columns(table: DataTable, names: Sequence[str]) -> tuple[DataTable, PreprocessLog]:
    present = [name for name in names if table.has_column(name)]
    if present:
        logger.info(f"[PREPROCESS] Dropping columns up front: {present}")
    return table.drop(present), PreprocessLog(dropped_columns=present)


def drop_duplicates(table: DataTable, id_column: str,
                    keep_first: bool = False) -> tuple[DataTable, PreprocessLog]:
    """
    Remove rows whose id occurs more than once.

    All copies go by default (duplicated clients are treated as noise);
    keep_first keeps the first occurrence instead.

    Args:
        table: Input table
        id_column: Client identifier column
        keep_first: Keep the first copy of each duplicated id

    Returns:
        (deduplicated table, log listing the duplicated ids)
    """
    if not table.has_column(id_column):
        raise PreprocessError(f"id column {id_column!r} not in table")

    ids = pd.Series(table.column(id_column))
    duplicated = ids.duplicated(keep=False) & ids.notna()
    dropped_ids = list(dict.fromkeys(ids[duplicated].tolist()))

    if keep_first:
        remove = ids.duplicated(keep="first") & ids.notna()
    else:
        remove = duplicated
    keep = np.flatnonzero(~remove.to_numpy())

    if dropped_ids:
        logger.info(f"[PREPROCESS] {len(dropped_ids)} duplicated ids, {int(remove.sum())} rows removed")
    log = PreprocessLog(dropped_duplicate_ids=dropped_ids, dropped_duplicate_rows=int(remove.sum()))
    return table.take(keep), log


def drop_sparse_rows(table: DataTable, max_missing_fraction: float = 0.5) -> tuple[DataTable, PreprocessLog]:
    """Drop rows missing more than the given fraction of their non-identifier cells."""
    columns = [s.name for s in table.schema if s.category is not AttributeCategory.IDENTIFIER]
    if not columns or table.n_rows == 0:
        return table, PreprocessLog()

    fraction = table.missing_mask()[columns].to_numpy().mean(axis=1)
    keep = np.flatnonzero(fraction <= max_missing_fraction)
    dropped = table.n_rows - len(keep)
    if dropped:
        logger.info(f"[PREPROCESS] {dropped} rows missing more than {max_missing_fraction:.0%} of cells removed")
    return table.take(keep), PreprocessLog(dropped_sparse_rows=dropped)


# ---------- IMPUTATION ----------

def _mode(values: pd.Series) -> str:
    counts = values.dropna().value_counts()
    top = counts.max()
    return min(label for label, count in counts.items() if count == top)


def impute(table: DataTable) -> tuple[DataTable, PreprocessLog]:
    """
    Replace Missing cells by the column mean (numeric) or mode (nominal).

    Mode ties resolve to the lexicographically smallest label.

    Returns:
        (complete table, log with imputed cell count per column)
    """
    if table.n_rows == 0:
        return table, PreprocessLog()

    frame = table.frame
    imputed = {}
    for spec in table.schema:
        missing = frame[spec.name].isna()
        count = int(missing.sum())
        if count == 0:
            continue
        if count == table.n_rows:
            raise PreprocessError(f"column {spec.name!r} has no observed value to impute from")
        if spec.kind is AttributeKind.NUMERIC:
            fill = float(frame[spec.name].mean(skipna=True))
        else:
            fill = _mode(frame[spec.name])
        frame.loc[missing, spec.name] = fill
        imputed[spec.name] = count

    if imputed:
        logger.info(f"[PREPROCESS] Imputed {sum(imputed.values())} cells across {len(imputed)} columns")
    return table.replace(table.schema, frame), PreprocessLog(imputed_cells=imputed)


# ---------- CORRELATION PRUNING ----------

def pearson(x, y) -> float:
    """
    Sample Pearson correlation of two equal-length vectors.

    Raises:
        PreprocessError: on length mismatch, fewer than 2 values, or a
        constant vector
    """
    x = np.asarray(x, dtype="float64")
    y = np.asarray(y, dtype="float64")
    if x.shape != y.shape or x.ndim != 1:
        raise PreprocessError(f"pearson needs equal-length vectors, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise PreprocessError("pearson needs at least 2 values")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise PreprocessError("pearson is undefined for a constant vector")
    r, _ = stats.pearsonr(x, y)
    return float(np.clip(r, -1.0, 1.0))


def prune_correlated(table: DataTable, threshold: float = 0.95) -> tuple[DataTable, PreprocessLog]:
    """
    Remove near-duplicate numeric columns.

    Columns are visited in schema order; a column is removed when its |r|
    with an already-surviving column exceeds the threshold (the survivor
    is recorded as the kept member of the pair). Survivors are therefore
    pairwise within the threshold.

    Args:
        table: Input table (numeric columns without Missing cells)
        threshold: Value in (0, 1]

    Returns:
        (pruned table, log of (kept, removed, r) pairs)
    """
    if not 0.0 < threshold <= 1.0:
        raise PreprocessError(f"correlation threshold {threshold} not in (0, 1]")

    candidates = [
        spec.name for spec in table.schema
        if spec.kind is AttributeKind.NUMERIC
        and spec.category is not AttributeCategory.IDENTIFIER
        and not spec.time
    ]
    survivors: list[str] = []
    pairs: list[PrunedPair] = []
    constant: list[str] = []

    for name in candidates:
        values = table.column(name)
        if np.isnan(values).any():
            raise PreprocessError(f"column {name!r} has Missing cells; impute before pruning")
        if len(values) < 2 or np.ptp(values) == 0:
            constant.append(name)
            logger.warning(f"[PREPROCESS] Column {name!r} is constant, skipped by correlation pruning")
            continue
        for kept in survivors:
            r = pearson(table.column(kept), values)
            if abs(r) > threshold:
                pairs.append(PrunedPair(kept=kept, removed=name, r=r))
                logger.info(f"[PREPROCESS] Pruned {name!r} (r={r:+.4f} with {kept!r})")
                break
        else:
            survivors.append(name)

    removed = [pair.removed for pair in pairs]
    return table.drop(removed), PreprocessLog(pruned_pairs=pairs, skipped_constant_columns=constant)


# ---------- NOMINAL ENCODING ----------

def encode_nominal(table: DataTable) -> tuple[DataTable, PreprocessLog]:
    """
    Turn every nominal column into integer codes 0, 1, 2, ... assigned in
    lexicographic label order.

    Returns:
        (all-numeric table, log with the label -> code map per column)
    """
    frame = table.frame
    schema = []
    encoded = {}
    for spec in table.schema:
        if spec.kind is not AttributeKind.NOMINAL:
            schema.append(spec)
            continue
        labels = frame[spec.name]
        if labels.isna().any():
            raise PreprocessError(f"nominal column {spec.name!r} has Missing cells; impute before encoding")
        mapping = {label: code for code, label in enumerate(sorted(set(labels)))}
        frame[spec.name] = labels.map(mapping).astype("float64")
        schema.append(spec.model_copy(update={"kind": AttributeKind.NUMERIC}))
        encoded[spec.name] = mapping

    if encoded:
        logger.info(f"[PREPROCESS] Encoded nominal columns: {list(encoded)}")
    return table.replace(schema, frame), PreprocessLog(encoded_columns=encoded)


# ---------- STAGE SELECTION ----------

def select_stage(table: DataTable, stage: StageSpec | str,
                 already_dropped: Iterable[str] = ()) -> DataTable:
    """
    Keep the attributes of one experiment stage.

    Identifier and time columns are always dropped; an excluded column the
    table does not have only triggers a warning, unless it is listed in
    already_dropped (removed earlier by the cleaning pipeline).
    """
    if isinstance(stage, str):
        stage = load_stage(stage)

    gone = set(already_dropped)
    for name in stage.excluded_columns:
        if not table.has_column(name) and name not in gone:
            logger.warning(f"[PREPROCESS] Stage {stage.name}: excluded column {name!r} not present")

    excluded_categories = set(stage.excluded_categories)
    excluded_columns = set(stage.excluded_columns)
    dropped = [
        spec.name for spec in table.schema
        if spec.category is AttributeCategory.IDENTIFIER
        or spec.time
        or spec.category in excluded_categories
        or spec.name in excluded_columns
    ]
    logger.info(f"[PREPROCESS] Stage {stage.name}: {len(table.columns) - len(dropped)} columns kept, "
                f"{len(dropped)} dropped")
    return table.drop(dropped)


def apply_stage(table: DataTable, stage: StageSpec,
                log: Optional[PreprocessLog] = None) -> tuple[DataTable, PreprocessLog]:
    """
    Stage selection as the last cleaning step.

    Args:
        table: Cleaned table
        stage: Stage to select
        log: Log of the cleaning run so far; columns it already dropped
             are not reported as missing

    Returns:
        (staged table, log extended with the stage and its dropped columns)
    """
    log = log or PreprocessLog(rows_in=table.n_rows)
    staged = select_stage(table, stage, already_dropped=log.dropped_columns)
    kept = set(staged.columns)
    log = log.merge(PreprocessLog(
        stage=stage.name,
        stage_dropped_columns=[name for name in table.columns if name not in kept],
        rows_out=staged.n_rows,
    ))
    return staged, log


def row_ids(table: DataTable, id_column: str) -> Optional[np.ndarray]:
    """Id value of every row, or None when the table has no id column."""
    return table.column(id_column) if table.has_column(id_column) else None


# ---------- SCALING ----------

def scale(matrix: np.ndarray) -> np.ndarray:
    """
    Center every column and divide by its sample standard deviation (n - 1).
    Constant columns become all zeros.
    """
    matrix = np.asarray(matrix, dtype="float64")
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise PreprocessError(f"scaling needs an n x d matrix with n >= 2, got shape {matrix.shape}")
    centered = matrix - matrix.mean(axis=0)
    sd = matrix.std(axis=0, ddof=1)
    out = np.zeros_like(centered)
    varying = sd > 0
    out[:, varying] = centered[:, varying] / sd[varying]
    return out


# ---------- FULL PIPELINE ----------

def run_preprocessing(table: DataTable, settings: PreprocessConfig,
                      stage: Optional[StageSpec] = None) -> tuple[DataTable, PreprocessLog]:
    """
    Run the fixed cleaning order on a table.

    A table without the id column (for instance pipeline output, whose
    identifier was removed by stage selection) skips duplicate removal.

    Args:
        table: Raw table
        settings: Preprocessing options
        stage: Stage to select at the end; no selection when None

    Returns:
        (clean table, merged log)
    """
    log = PreprocessLog(rows_in=table.n_rows)

    table, step = drop_columns(table, settings.drop_columns)
    log = log.merge(step)

    if table.has_column(settings.id_column):
        table, step = drop_duplicates(table, settings.id_column, keep_first=settings.keep_first_duplicate)
        log = log.merge(step)
    else:
        logger.info(f"[PREPROCESS] No {settings.id_column!r} column, duplicate removal skipped")

    for step_fn in (
        lambda t: drop_sparse_rows(t, settings.max_missing_fraction),
        impute,
        lambda t: prune_correlated(t, settings.correlation_threshold),
        encode_nominal,
    ):
        table, step = step_fn(table)
        log = log.merge(step)

    if stage is not None:
        table, log = apply_stage(table, stage, log)

    log = log.merge(PreprocessLog(rows_out=table.n_rows))
    logger.info(f"[PREPROCESS] {log.rows_in} rows in, {table.n_rows} rows out, {len(table.columns)} columns")
    return table, log
