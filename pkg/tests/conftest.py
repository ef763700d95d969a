"""Shared fixtures: small hand-made tables and the default synthetic population."""

import numpy as np
import pandas as pd
import pytest

from segmint.core.synthgen import default_group_specs, generate
from segmint.core.tabular import DataTable, default_schema
from segmint.schemas import AttributeCategory, AttributeKind, ColumnSpec


def planted_signature(spec) -> frozenset:
    return frozenset(f"{a}{'+' if s > 0 else '-'}" for a, s in spec.shifts.items())


@pytest.fixture
def small_schema():
    return (
        ColumnSpec(name="pid", kind=AttributeKind.NUMERIC, category=AttributeCategory.IDENTIFIER),
        ColumnSpec(name="age", kind=AttributeKind.NUMERIC, category=AttributeCategory.DEMOGRAPHICS),
        ColumnSpec(name="gender", kind=AttributeKind.NOMINAL, category=AttributeCategory.DEMOGRAPHICS),
        ColumnSpec(name="travel", kind=AttributeKind.NUMERIC, category=AttributeCategory.EXPENDITURE),
    )


@pytest.fixture
def small_table(small_schema):
    frame = pd.DataFrame({
        "pid": [1.0, 2.0, 3.0, 4.0],
        "age": [30.0, np.nan, 50.0, 40.0],
        "gender": ["male", "female", None, "female"],
        "travel": [10.0, 20.0, 30.0, 40.0],
    })
    return DataTable(small_schema, frame)


@pytest.fixture(scope="session")
def cccs_schema():
    return default_schema()


@pytest.fixture(scope="session")
def population(cccs_schema):
    """Default baseline + six planted groups, with missing cells and duplicates."""
    return generate(cccs_schema, default_group_specs(), seed=11, missing_rate=0.01, duplicate_rate=0.02)


@pytest.fixture(scope="session")
def clean_population(cccs_schema):
    """Default groups without missing cells or duplicates, so ground truth stays row-aligned."""
    return generate(cccs_schema, default_group_specs(), seed=3, missing_rate=0.0, duplicate_rate=0.0)


@pytest.fixture
def four_points():
    return np.array([[0.0], [1.0], [10.0], [11.0]]), np.array([0, 0, 1, 1])
