"""
Tabular Core
=============
Column-typed table model with the CCCS category schema, CSV ingestion and
emission, and missingness tracking.

A DataTable is immutable: every accessor hands out copies and every
transformation builds a new table. Numeric cells are float64 with NaN
standing for Missing; nominal cells are Python strings with None for
Missing.

CSV convention: RFC-4180 style, UTF-8, header row required, the missing
token (default "NA") and the empty string both read as Missing.
"""

import json
import logging
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import TypeAdapter, ValidationError

from segmint import config
from segmint.errors import TableError
from segmint.schemas import AttributeCategory, AttributeKind, ColumnSpec

logger = logging.getLogger(__name__)

_SCHEMA_ADAPTER = TypeAdapter(list[ColumnSpec])


# ---------- SCHEMA ----------

def validate_schema(schema: Sequence[ColumnSpec]) -> tuple[ColumnSpec, ...]:
    """Reject schemas with repeated column names."""
    seen = set()
    for spec in schema:
        if spec.name in seen:
            raise TableError(f"duplicate column {spec.name!r} in schema")
        seen.add(spec.name)
    return tuple(schema)


def load_schema(path: Optional[str | Path] = None) -> tuple[ColumnSpec, ...]:
    """
    Load a schema file (JSON list of {name, kind, category}).

    Args:
        path: User schema file; the bundled CCCS schema when None

    Returns:
        Tuple of ColumnSpec in file order
    """
    try:
        if path is None:
            text = resources.files("segmint").joinpath("data", "cccs_schema.json").read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise TableError(f"cannot read schema file {path}: {e}") from e

    try:
        specs = _SCHEMA_ADAPTER.validate_json(text)
    except ValidationError as e:
        raise TableError(f"invalid schema file {path or 'cccs_schema.json'}: {e}") from e
    return validate_schema(specs)


def default_schema() -> tuple[ColumnSpec, ...]:
    return load_schema(None)


# ---------- DATA TABLE ----------

class DataTable:
    """
    Immutable column-typed table.

    Args:
        schema: Column specs, one per frame column, in order
        frame: Cell values; columns must match schema names exactly
    """

    def __init__(self, schema: Sequence[ColumnSpec], frame: pd.DataFrame):
        schema = validate_schema(schema)
        names = [spec.name for spec in schema]
        if list(frame.columns) != names:
            raise TableError(f"frame columns {list(frame.columns)} do not match schema {names}")

        cells = {}
        for spec in schema:
            series = frame[spec.name].reset_index(drop=True)
            if spec.kind is AttributeKind.NUMERIC:
                try:
                    cells[spec.name] = series.astype("float64")
                except (TypeError, ValueError) as e:
                    raise TableError(f"numeric column {spec.name!r} holds non-numeric cells") from e
            else:
                missing = series.isna()
                labels = series.astype(object).copy()
                labels[missing] = None
                if not all(isinstance(v, str) for v in labels[~missing]):
                    raise TableError(f"nominal column {spec.name!r} holds non-label cells")
                cells[spec.name] = labels
        self._schema = schema
        self._frame = pd.DataFrame(cells, columns=names, index=pd.RangeIndex(len(frame)))

    # ---------- ACCESSORS ----------

    @property
    def schema(self) -> tuple[ColumnSpec, ...]:
        return self._schema

    @property
    def columns(self) -> list[str]:
        return [spec.name for spec in self._schema]

    @property
    def n_rows(self) -> int:
        return len(self._frame)

    def __len__(self) -> int:
        return self.n_rows

    @property
    def frame(self) -> pd.DataFrame:
        """Copy of the underlying cells."""
        return self._frame.copy()

    def spec(self, name: str) -> ColumnSpec:
        for spec in self._schema:
            if spec.name == name:
                return spec
        raise TableError(f"unknown column {name!r}")

    def has_column(self, name: str) -> bool:
        return any(spec.name == name for spec in self._schema)

    def column(self, name: str) -> np.ndarray:
        """Copy of one column: float64 for numeric, object for nominal."""
        self.spec(name)
        return self._frame[name].to_numpy(copy=True)

    def missing_mask(self) -> pd.DataFrame:
        return self._frame.isna()

    def missing_count(self) -> int:
        return int(self.missing_mask().to_numpy().sum())

    def columns_of(self, kind: Optional[AttributeKind] = None,
                   category: Optional[AttributeCategory] = None) -> list[str]:
        return [
            spec.name for spec in self._schema
            if (kind is None or spec.kind is kind) and (category is None or spec.category is category)
        ]

    # ---------- DERIVED TABLES ----------

    def take(self, rows: Iterable[int] | np.ndarray) -> "DataTable":
        """Rows by position, in the given order."""
        index = np.asarray(list(rows), dtype=int)
        return DataTable(self._schema, self._frame.iloc[index])

    def drop(self, names: Iterable[str]) -> "DataTable":
        names = set(names)
        keep = [spec for spec in self._schema if spec.name not in names]
        return DataTable(keep, self._frame[[spec.name for spec in keep]])

    def select(self, names: Sequence[str]) -> "DataTable":
        specs = [self.spec(name) for name in names]
        return DataTable(specs, self._frame[list(names)])

    def replace(self, schema: Sequence[ColumnSpec], frame: pd.DataFrame) -> "DataTable":
        return DataTable(schema, frame)

    def __eq__(self, other) -> bool:
        if not isinstance(other, DataTable):
            return NotImplemented
        return self._schema == other._schema and self._frame.equals(other._frame)

    def __repr__(self) -> str:
        return f"DataTable(n_rows={self.n_rows}, columns={len(self._schema)}, missing={self.missing_count()})"


# ---------- CSV I/O ----------

def _restrict_schema(schema: Sequence[ColumnSpec], header: list[str], strict: bool) -> list[ColumnSpec]:
    by_name = {spec.name: spec for spec in schema}
    unknown = [name for name in header if name not in by_name]
    if unknown:
        raise TableError(f"column {unknown[0]!r} in header is not in the schema")
    absent = [spec.name for spec in schema if spec.name not in set(header)]
    if absent:
        if strict:
            raise TableError(f"schema column {absent[0]!r} missing from header")
        logger.warning(f"[TABLE] {len(absent)} schema columns absent from file, ignored: {absent[:5]}")
    return [spec for spec in schema if spec.name in set(header)]


def read_csv(path: str | Path, schema: Sequence[ColumnSpec],
             missing_token: Optional[str] = None, strict: bool = True) -> DataTable:
    """
    Read a CSV file into a DataTable.

    Header order does not matter; the table follows schema order.

    Args:
        path: CSV file path
        schema: Column specs expected in the header
        missing_token: Token read as Missing (the empty string always is)
        strict: Fail when a schema column is absent from the header

    Returns:
        The parsed table
    """
    token = config.MISSING_TOKEN if missing_token is None else missing_token
    schema = validate_schema(schema)
    try:
        raw = pd.read_csv(path, header=None, dtype=str, keep_default_na=False,
                          na_filter=False, encoding="utf-8")
    except FileNotFoundError as e:
        raise TableError(f"input file not found: {path}") from e
    except pd.errors.EmptyDataError as e:
        raise TableError(f"{path} has no header row") from e
    except (OSError, UnicodeDecodeError, pd.errors.ParserError) as e:
        raise TableError(f"cannot read {path}: {e}") from e

    header = [str(h) for h in raw.iloc[0].tolist()]
    duplicates = sorted({h for h in header if header.count(h) > 1})
    if duplicates:
        raise TableError(f"duplicate header name {duplicates[0]!r} in {path}")

    specs = _restrict_schema(schema, header, strict)
    body = raw.iloc[1:].reset_index(drop=True)
    body.columns = header

    cells = {}
    for spec in specs:
        text = body[spec.name]
        missing = text.isin([token, ""])
        if spec.kind is AttributeKind.NUMERIC:
            parsed = pd.to_numeric(text.where(~missing), errors="coerce")
            bad = (~missing) & ~np.isfinite(parsed.to_numpy(dtype="float64"))
            if bad.any():
                row = int(np.flatnonzero(bad.to_numpy())[0])
                raise TableError(
                    f"unparseable numeric cell {text.iloc[row]!r} at row {row + 1}, column {spec.name!r}"
                )
            cells[spec.name] = parsed.astype("float64")
        else:
            labels = text.astype(object).copy()
            labels[missing] = None
            cells[spec.name] = labels

    frame = pd.DataFrame(cells, columns=[spec.name for spec in specs], index=pd.RangeIndex(len(body)))
    table = DataTable(specs, frame)
    logger.info(f"[TABLE] Read {path}: {table.n_rows} rows, {len(specs)} columns, "
                f"{table.missing_count()} missing cells")
    return table


def write_csv(table: DataTable, path: str | Path, missing_token: Optional[str] = None) -> None:
    """
    Write a DataTable as CSV in schema order, Missing as the missing token.

    Args:
        table: Table to write
        path: Destination file
        missing_token: Token written for Missing cells
    """
    token = config.MISSING_TOKEN if missing_token is None else missing_token
    try:
        table.frame.to_csv(path, index=False, na_rep=token, lineterminator="\n", encoding="utf-8")
    except OSError as e:
        raise TableError(f"cannot write {path}: {e}") from e


# ---------- MATRIX EXTRACTION ----------

def to_matrix(table: DataTable, columns: Optional[Sequence[str]] = None) -> tuple[np.ndarray, list[str]]:
    """
    Dense float matrix of numeric columns, row order preserved.

    Args:
        table: Source table (imputed beforehand)
        columns: Requested columns in output order; all columns when None

    Returns:
        (n x d matrix, column names in matrix order)
    """
    names = list(table.columns if columns is None else columns)
    for name in names:
        spec = table.spec(name)
        if spec.kind is not AttributeKind.NUMERIC:
            raise TableError(f"column {name!r} is nominal; encode it before building a matrix")
    frame = table.frame[names]
    if frame.isna().to_numpy().any():
        first = next(name for name in names if frame[name].isna().any())
        raise TableError(f"column {first!r} has Missing cells; impute before building a matrix")
    return frame.to_numpy(dtype="float64", copy=True).reshape(table.n_rows, len(names)), names


def schema_to_json(schema: Sequence[ColumnSpec]) -> str:
    return json.dumps([spec.model_dump(mode="json") for spec in schema], indent=2) + "\n"
