import numpy as np
import pandas as pd
import pytest

from segmint.core.preprocess import (
    apply_stage,
    builtin_stages,
    drop_duplicates,
    drop_sparse_rows,
    encode_nominal,
    impute,
    load_stage,
    pearson,
    prune_correlated,
    run_preprocessing,
    scale,
    select_stage,
)
from segmint.core.tabular import DataTable
from segmint.errors import PreprocessError
from segmint.schemas import (
    AttributeCategory,
    AttributeKind,
    ColumnSpec,
    PreprocessConfig,
    PreprocessLog,
    StageSpec,
)


def _numeric(name, category=AttributeCategory.EXPENDITURE):
    return ColumnSpec(name=name, kind=AttributeKind.NUMERIC, category=category)


def _nominal(name):
    return ColumnSpec(name=name, kind=AttributeKind.NOMINAL, category=AttributeCategory.DEMOGRAPHICS)


def _table(columns: dict, specs) -> DataTable:
    return DataTable(specs, pd.DataFrame(columns))


# ---------- DUPLICATES ----------

def test_duplicated_ids_lose_every_copy():
    table = _table({"pid": [1.0, 2, 2, 3, 3, 3], "x": [0.0, 1, 2, 3, 4, 5]},
                   [_numeric("pid", AttributeCategory.IDENTIFIER), _numeric("x")])
    out, log = drop_duplicates(table, "pid")
    assert out.column("pid").tolist() == [1.0]
    assert log.dropped_duplicate_ids == [2.0, 3.0]
    assert log.dropped_duplicate_rows == 5


def test_keep_first_duplicate():
    table = _table({"pid": [1.0, 2, 2, 3, 3, 3], "x": [0.0, 1, 2, 3, 4, 5]},
                   [_numeric("pid", AttributeCategory.IDENTIFIER), _numeric("x")])
    out, log = drop_duplicates(table, "pid", keep_first=True)
    assert out.column("x").tolist() == [0.0, 1.0, 3.0]
    assert log.dropped_duplicate_rows == 3


def test_unknown_id_column(small_table):
    with pytest.raises(PreprocessError, match="'client'"):
        drop_duplicates(small_table, "client")


def test_sparse_rows_dropped():
    specs = [_numeric("pid", AttributeCategory.IDENTIFIER), _numeric("a"), _numeric("b"), _numeric("c")]
    table = _table({"pid": [1.0, 2.0, 3.0], "a": [1.0, np.nan, np.nan],
                    "b": [1.0, np.nan, 2.0], "c": [1.0, 5.0, 2.0]}, specs)
    out, log = drop_sparse_rows(table, 0.5)
    assert out.column("pid").tolist() == [1.0, 3.0]
    assert log.dropped_sparse_rows == 1


# ---------- IMPUTATION ----------

def test_mean_and_mode_imputation():
    table = _table({"x": [1.0, np.nan, 3.0, 4.0, np.nan], "g": ["b", "a", None, "a", "b"]},
                   [_numeric("x"), _nominal("g")])
    out, log = impute(table)
    assert out.column("x").tolist() == pytest.approx([1.0, 8.0 / 3, 3.0, 4.0, 8.0 / 3])
    assert out.column("g").tolist() == ["b", "a", "a", "a", "b"]
    assert log.imputed_cells == {"x": 2, "g": 1}
    assert out.missing_count() == 0


def test_imputation_keeps_observed_mean():
    values = [2.0, np.nan, 5.0, np.nan, 11.0]
    out, _ = impute(_table({"x": values}, [_numeric("x")]))
    assert out.column("x").mean() == pytest.approx(np.nanmean(values))


def test_all_missing_column_cannot_be_imputed():
    with pytest.raises(PreprocessError, match="'x'"):
        impute(_table({"x": [np.nan, np.nan]}, [_numeric("x")]))


# ---------- PEARSON / PRUNING ----------

def test_pearson_matches_formula():
    rng = np.random.default_rng(5)
    x = rng.normal(size=200)
    y = 0.3 * x + rng.normal(size=200)
    dx, dy = x - x.mean(), y - y.mean()
    expected = (dx * dy).sum() / np.sqrt((dx ** 2).sum() * (dy ** 2).sum())
    assert abs(pearson(x, y) - expected) < 1e-12


def test_pearson_rejects_degenerate_input():
    with pytest.raises(PreprocessError, match="constant"):
        pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(PreprocessError, match="equal-length"):
        pearson([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(PreprocessError, match="at least 2"):
        pearson([1.0], [2.0])


def test_prune_removes_injected_copy_and_keeps_earlier_column(caplog):
    rng = np.random.default_rng(1)
    a = rng.normal(size=100)
    b = rng.normal(size=100)
    table = _table({"a": a, "b": b, "k": np.ones(100), "c": 2 * a + 1},
                   [_numeric("a"), _numeric("b"), _numeric("k"), _numeric("c")])
    out, log = prune_correlated(table, 0.95)

    assert out.columns == ["a", "b", "k"]
    assert [(p.kept, p.removed) for p in log.pruned_pairs] == [("a", "c")]
    assert log.pruned_pairs[0].r == pytest.approx(1.0)
    assert log.skipped_constant_columns == ["k"]
    assert "constant" in caplog.text


def test_prune_survivors_are_pairwise_below_threshold(population):
    table, _ = population
    table, _ = impute(drop_duplicates(table, "pid")[0].drop(["occupation"]))
    out, _ = prune_correlated(table, 0.95)
    names = [n for n in out.columns_of(kind=AttributeKind.NUMERIC)
             if out.spec(n).category is not AttributeCategory.IDENTIFIER and not out.spec(n).time]
    matrix = np.column_stack([out.column(n) for n in names])
    r = np.corrcoef(matrix, rowvar=False)
    np.fill_diagonal(r, 0.0)
    assert np.abs(r).max() <= 0.95


def test_prune_keeps_pair_just_below_threshold():
    rng = np.random.default_rng(2)
    a = rng.normal(size=300)
    a -= a.mean()
    noise = rng.normal(size=300)
    noise -= noise.mean()
    noise -= (noise @ a) / (a @ a) * a
    noise *= np.linalg.norm(a) / np.linalg.norm(noise)
    b = 0.94 * a + np.sqrt(1 - 0.94 ** 2) * noise
    assert pearson(a, b) == pytest.approx(0.94)

    table = _table({"a": a, "b": b}, [_numeric("a"), _numeric("b")])
    out, log = prune_correlated(table, 0.95)
    assert out.columns == ["a", "b"]
    assert log.pruned_pairs == []


def test_prune_correlated_triple_keeps_first_in_schema_order():
    rng = np.random.default_rng(3)
    base = rng.normal(size=200)
    columns = {name: base + 0.05 * rng.normal(size=200) for name in ("x3", "x1", "x2")}
    table = _table(columns, [_numeric("x3"), _numeric("x1"), _numeric("x2")])
    out, log = prune_correlated(table, 0.95)

    assert out.columns == ["x3"]
    assert [(p.kept, p.removed) for p in log.pruned_pairs] == [("x3", "x1"), ("x3", "x2")]


def test_prune_threshold_range():
    with pytest.raises(PreprocessError):
        prune_correlated(_table({"a": [1.0, 2.0]}, [_numeric("a")]), 0.0)


# ---------- ENCODING ----------

def test_nominal_codes_follow_label_order():
    table = _table({"colour": ["red", "blue", "green", "blue"]}, [_nominal("colour")])
    out, log = encode_nominal(table)
    assert out.column("colour").tolist() == [2.0, 0.0, 1.0, 0.0]
    assert out.spec("colour").kind is AttributeKind.NUMERIC
    assert log.encoded_columns == {"colour": {"blue": 0, "green": 1, "red": 2}}


def test_encoding_requires_imputation(small_table):
    with pytest.raises(PreprocessError, match="'gender'"):
        encode_nominal(small_table)


# ---------- STAGES ----------

def test_builtin_stages_nest():
    stages = builtin_stages()
    assert set(stages) == {"A", "B", "C"}
    a, b, c = stages["A"], stages["B"], stages["C"]
    assert set(a.excluded_columns) <= set(b.excluded_columns) <= set(c.excluded_columns)
    assert set(b.excluded_categories) <= set(c.excluded_categories)
    assert AttributeCategory.DEBT_DETAILS in c.excluded_categories


def test_unknown_stage_lists_known_ones():
    with pytest.raises(PreprocessError, match="A, B, C"):
        load_stage("Z")


def test_custom_stage_file(tmp_path):
    path = tmp_path / "stage.json"
    path.write_text('{"name": "D", "excluded_categories": ["Income"], "excluded_columns": ["age"]}')
    stage = load_stage("D", path)
    assert stage.excluded_categories == (AttributeCategory.INCOME,)
    assert stage.excluded_columns == ("age",)


def test_stage_c_on_cccs_table(population):
    table, _ = population
    out = select_stage(table, "C")
    assert "pid" not in out.columns
    assert "month" not in out.columns and "year" not in out.columns
    assert not {"gender", "marital", "tenure", "region", "employment", "occupation"} & set(out.columns)
    assert not [n for n in out.columns if out.spec(n).category is AttributeCategory.DEBT_DETAILS]
    assert {"travel", "income", "hvalue", "udebt", "age"} <= set(out.columns)


def test_absent_excluded_column_only_warns(small_table, caplog):
    stage = StageSpec(name="X", excluded_columns=["occupation"])
    out = select_stage(small_table, stage)
    assert out.columns == ["age", "gender", "travel"]
    assert "'occupation' not present" in caplog.text


def test_column_dropped_upfront_is_not_reported_missing(small_table, caplog):
    stage = StageSpec(name="X", excluded_columns=["occupation"])
    out, log = apply_stage(small_table, stage, PreprocessLog(rows_in=4, dropped_columns=["occupation"]))
    assert out.columns == ["age", "gender", "travel"]
    assert log.stage == "X"
    assert log.stage_dropped_columns == ["pid"]
    assert log.rows_out == 4
    assert "not present" not in caplog.text


def test_default_pipeline_with_stage_does_not_warn_about_occupation(population, caplog):
    table, _ = population
    clean, log = run_preprocessing(table, PreprocessConfig(), load_stage("C"))
    assert "occupation" in log.dropped_columns
    assert "not present" not in caplog.text
    assert "occupation" not in clean.columns


# ---------- SCALING ----------

def test_scale_uses_sample_sd_and_zeroes_constants():
    matrix = np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
    out = scale(matrix)
    assert out[:, 0].tolist() == pytest.approx([-1.0, 0.0, 1.0])
    assert out[:, 1].tolist() == [0.0, 0.0, 0.0]


def test_scale_needs_two_rows():
    with pytest.raises(PreprocessError):
        scale(np.array([[1.0, 2.0]]))


# ---------- FULL PIPELINE ----------

def test_pipeline_on_population(population):
    table, _ = population
    clean, log = run_preprocessing(table, PreprocessConfig(), load_stage("C"))

    assert log.dropped_columns == ["occupation"]
    assert log.dropped_duplicate_rows > 0
    assert clean.missing_count() == 0
    removed = {(p.kept, p.removed) for p in log.pruned_pairs}
    assert ("hvalue", "mortdebt") in removed
    assert ("udcc", "cpcc") in removed
    assert log.stage == "C"
    assert log.rows_in == table.n_rows and log.rows_out == clean.n_rows
    assert all(clean.spec(n).kind is AttributeKind.NUMERIC for n in clean.columns)


def test_pipeline_is_idempotent(population):
    table, _ = population
    settings = PreprocessConfig()
    clean, _ = run_preprocessing(table, settings, load_stage("C"))
    again, log = run_preprocessing(clean, settings, load_stage("C"))

    assert again == clean
    assert log.pruned_pairs == []
    assert log.imputed_cells == {}
    assert log.dropped_duplicate_rows == 0 and log.dropped_sparse_rows == 0


def test_pipeline_without_stage_keeps_identifier(population):
    table, _ = population
    clean, log = run_preprocessing(table, PreprocessConfig())
    assert "pid" in clean.columns
    assert len(set(clean.column("pid"))) == clean.n_rows
    assert log.stage is None
