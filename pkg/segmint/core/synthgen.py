"""
Synthetic CCCS Tables
======================
Deterministic generator of schema-conforming tables with planted
Behavioural Groups.

Every attribute has a base distribution (log-normal for money, normal,
Poisson, uniform integers, categorical labels). A group shifts selected
attributes by a multiple of the base IQR, so "+2" moves the group median
two IQRs above the population it was drawn from. Derived columns carry
the redundancy real debt-advice data has: mortgage debt tracks house
value, per-creditor contracted payments track per-creditor balances.

Rows are shuffled after generation, identifiers assigned 1..N, then Missing
cells and exact duplicate rows injected at the requested rates.
"""

import logging
import math
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import TypeAdapter, ValidationError
from scipy import stats

from segmint.core.tabular import DataTable
from segmint.errors import SynthesisError
from segmint.schemas import AttributeDistribution, AttributeKind, ColumnSpec, GroupSpec

logger = logging.getLogger(__name__)

_SPECS_ADAPTER = TypeAdapter(list[GroupSpec])

# Standard normal quartile.
_Z75 = float(stats.norm.ppf(0.75))

_SHIFTABLE = {"lognormal", "normal", "poisson"}
_DERIVED = {"share", "scaled"}

_DEBT_CREDITORS = ["cat", "coll", "cc", "gec", "od", "pl", "oth", "sc"]


# ---------- DEFAULT DISTRIBUTIONS ----------

def _money(median: float, sigma: float = 0.3) -> AttributeDistribution:
    return AttributeDistribution(family="lognormal", median=median, sigma=sigma, lower=0.0, decimals=2)


def _labels(*levels: str) -> AttributeDistribution:
    return AttributeDistribution(family="categorical", levels=list(levels))


def default_base_distributions() -> dict[str, AttributeDistribution]:
    """Base distribution for every column of the bundled CCCS schema."""
    base = {
        "pid": AttributeDistribution(family="sequence"),
        "month": AttributeDistribution(family="uniform_int", low=1, high=12),
        "year": AttributeDistribution(family="uniform_int", low=2004, high=2008),
        "age": AttributeDistribution(family="normal", mean=42.0, sd=12.0, lower=18.0, upper=90.0, decimals=0),
        "ndep": AttributeDistribution(family="poisson", rate=1.2),
        "gender": _labels("female", "male"),
        "marital": _labels("cohabiting", "divorced", "married", "separated", "single", "widowed"),
        "tenure": _labels("council", "mortgage", "owner", "private_rent", "with_family"),
        "region": _labels("east", "london", "midlands", "north", "scotland", "south", "wales"),
        "employment": _labels("employed", "retired", "self_employed", "student", "unemployed"),
        "occupation": _labels("clerical", "managerial", "manual", "professional", "sales", "service"),
        "udebt": _money(15000.0),
        "hvalue": _money(150000.0),
        "finasset": _money(3000.0),
        "carvalue": _money(4000.0),
        "mortdebt": AttributeDistribution(family="scaled", source="hvalue", factor=0.55, noise=0.01,
                                          lower=0.0, decimals=2),
        "mortterm": AttributeDistribution(family="normal", mean=20.0, sd=6.0, lower=1.0, upper=35.0, decimals=0),
        "clothing": _money(40.0),
        "travel": _money(60.0),
        "food": _money(250.0),
        "services": _money(120.0),
        "housing": _money(450.0),
        "motoring": _money(150.0),
        "leisure": _money(50.0),
        "priority": _money(200.0),
        "sundries": _money(60.0),
        "sempspend": _money(30.0),
        "other": _money(80.0),
        "income": _money(1400.0),
    }
    for creditor in _DEBT_CREDITORS:
        base[f"ud{creditor}"] = AttributeDistribution(family="share", source="udebt", lower=0.0, decimals=2)
        base[f"cp{creditor}"] = AttributeDistribution(family="scaled", source=f"ud{creditor}", factor=0.03,
                                                      noise=0.01, lower=0.0, decimals=2)
        base[f"tc{creditor}"] = _money(40.0)
    return base


def default_group_specs() -> list[GroupSpec]:
    """A baseline population plus the six planted Behavioural Groups."""
    text = resources.files("segmint").joinpath("data", "default_groups.json").read_text(encoding="utf-8")
    return _SPECS_ADAPTER.validate_json(text)


def load_group_specs(path: str | Path) -> list[GroupSpec]:
    try:
        return _SPECS_ADAPTER.validate_json(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise SynthesisError(f"cannot read group specs {path}: {e}") from e
    except ValidationError as e:
        raise SynthesisError(f"invalid group specs {path}: {e}") from e


# ---------- DRAWING ----------

def base_iqr(dist: AttributeDistribution) -> float:
    """Interquartile range of the unshifted distribution."""
    if dist.family == "lognormal":
        return dist.median * (math.exp(_Z75 * dist.sigma) - math.exp(-_Z75 * dist.sigma))
    if dist.family == "normal":
        return 2.0 * _Z75 * dist.sd
    if dist.family == "poisson":
        return float(stats.poisson.ppf(0.75, dist.rate) - stats.poisson.ppf(0.25, dist.rate))
    raise SynthesisError(f"{dist.family} distributions cannot be shifted")


def _draw(dist: AttributeDistribution, size: int, rng: np.random.Generator):
    if dist.family == "lognormal":
        return dist.median * np.exp(dist.sigma * rng.standard_normal(size))
    if dist.family == "normal":
        return dist.mean + dist.sd * rng.standard_normal(size)
    if dist.family == "poisson":
        return rng.poisson(dist.rate, size).astype("float64")
    if dist.family == "uniform_int":
        return rng.integers(dist.low, dist.high, size, endpoint=True).astype("float64")
    if dist.family == "categorical":
        p = None
        if dist.weights is not None:
            p = np.asarray(dist.weights, dtype="float64")
            p = p / p.sum()
        return np.asarray(dist.levels, dtype=object)[rng.choice(len(dist.levels), size=size, p=p)]
    raise SynthesisError(f"cannot draw {dist.family} directly")


def _finish(values: np.ndarray, dist: AttributeDistribution) -> np.ndarray:
    if dist.lower is not None or dist.upper is not None:
        values = np.clip(values, dist.lower, dist.upper)
    if dist.decimals is not None:
        values = np.round(values, dist.decimals)
    return values


def _check_inputs(schema: Sequence[ColumnSpec], specs: Sequence[GroupSpec],
                  distributions: dict[str, AttributeDistribution]) -> None:
    if not specs:
        raise SynthesisError("at least one group spec is required")
    ids = [s.group_id for s in specs]
    if len(set(ids)) != len(ids):
        raise SynthesisError(f"duplicate group ids in {ids}")
    names = [c.name for c in schema]
    for spec in schema:
        if spec.name not in distributions:
            raise SynthesisError(f"no base distribution for column {spec.name!r}")
        dist = distributions[spec.name]
        if dist.family in _DERIVED and dist.source not in names[: names.index(spec.name)]:
            raise SynthesisError(f"column {spec.name!r} derives from {dist.source!r}, which must come earlier")
        if (dist.family == "categorical") != (spec.kind is AttributeKind.NOMINAL):
            raise SynthesisError(f"column {spec.name!r}: {dist.family} distribution does not fit a {spec.kind.value} column")
    for group in specs:
        for attribute in group.shifts:
            if attribute not in names:
                raise SynthesisError(f"group {group.group_id} shifts unknown attribute {attribute!r}")
            if distributions[attribute].family not in _SHIFTABLE:
                raise SynthesisError(f"group {group.group_id}: attribute {attribute!r} "
                                     f"({distributions[attribute].family}) cannot be shifted")


def _draw_group(schema: Sequence[ColumnSpec], group: GroupSpec,
                distributions: dict[str, AttributeDistribution], rng: np.random.Generator) -> dict:
    columns: dict[str, np.ndarray] = {}
    for spec in schema:
        dist = distributions[spec.name]
        if dist.family == "sequence":
            columns[spec.name] = np.zeros(group.size)
        elif dist.family not in _DERIVED:
            values = _draw(dist, group.size, rng)
            shift = group.shifts.get(spec.name, 0.0)
            if shift:
                values = values + shift * base_iqr(dist)
            columns[spec.name] = values if dist.family == "categorical" else _finish(values, dist)

    # shares of one source split it with a single Dirichlet draw per row
    share_sources: dict[str, list[str]] = {}
    for spec in schema:
        dist = distributions[spec.name]
        if dist.family == "share":
            share_sources.setdefault(dist.source, []).append(spec.name)
    for source, targets in share_sources.items():
        parts = rng.dirichlet(np.ones(len(targets)), size=group.size)
        for j, name in enumerate(targets):
            columns[name] = _finish(columns[source] * parts[:, j], distributions[name])

    for spec in schema:
        dist = distributions[spec.name]
        if dist.family == "scaled":
            noise = 1.0 + dist.noise * rng.standard_normal(group.size)
            columns[spec.name] = _finish(dist.factor * columns[dist.source] * noise, dist)
    return columns


# ---------- GENERATION ----------

def generate(schema: Sequence[ColumnSpec], specs: Sequence[GroupSpec], seed: int,
             missing_rate: float = 0.0, duplicate_rate: float = 0.0,
             distributions: Optional[dict[str, AttributeDistribution]] = None) -> tuple[DataTable, np.ndarray]:
    """
    Draw a table with planted groups.

    Args:
        schema: Column specs of the output table
        specs: Planted groups (sizes and IQR-multiple shifts)
        seed: Generator seed; equal arguments give identical output
        missing_rate: Per-cell probability of Missing (identifier excluded)
        duplicate_rate: Fraction of rows appended again as exact copies
        distributions: Base distribution per column; CCCS defaults when None

    Returns:
        (table, ground-truth group id per row)
    """
    if not 0.0 <= missing_rate < 1.0:
        raise SynthesisError(f"missing_rate={missing_rate} not in [0, 1)")
    if not 0.0 <= duplicate_rate < 1.0:
        raise SynthesisError(f"duplicate_rate={duplicate_rate} not in [0, 1)")
    distributions = default_base_distributions() if distributions is None else distributions
    _check_inputs(schema, specs, distributions)

    rng = np.random.default_rng(seed)
    names = [c.name for c in schema]
    blocks = []
    truth = []
    for group in specs:
        blocks.append(pd.DataFrame(_draw_group(schema, group, distributions, rng), columns=names))
        truth.append(np.full(group.size, group.group_id, dtype=np.int64))

    frame = pd.concat(blocks, ignore_index=True)
    truth = np.concatenate(truth)
    order = rng.permutation(len(frame))
    frame = frame.iloc[order].reset_index(drop=True)
    truth = truth[order]

    sequence_columns = [n for n in names if distributions[n].family == "sequence"]
    for name in sequence_columns:
        frame[name] = np.arange(1, len(frame) + 1, dtype="float64")

    if missing_rate > 0:
        eligible = [n for n in names if n not in sequence_columns]
        mask = rng.random((len(frame), len(eligible))) < missing_rate
        for j, name in enumerate(eligible):
            frame.loc[mask[:, j], name] = None

    n_duplicates = int(round(duplicate_rate * len(frame)))
    if n_duplicates:
        picked = np.sort(rng.choice(len(frame), size=n_duplicates, replace=False))
        frame = pd.concat([frame, frame.iloc[picked]], ignore_index=True)
        truth = np.concatenate([truth, truth[picked]])

    table = DataTable(schema, frame)
    logger.info(f"[SYNTH] Generated {table.n_rows} rows ({n_duplicates} duplicates) for "
                f"{len(specs)} groups, {table.missing_count()} missing cells, seed={seed}")
    return table, truth
