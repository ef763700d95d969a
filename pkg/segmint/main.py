"""
segmint: Main Application
==========================
Command-line entry point that runs the Behavioural Group pipeline from a
JSON run config, with flags overriding config fields.

Commands:
    generate    synthetic CCCS table + ground truth
    preprocess  cleaning log + cleaned table
    sweep       k-sweep reports, index scores, k selection
    profile     box statistics, expression profiles, matched groups, plots
    selfish     selfishness ranking from a ratings CSV
    pipeline    everything above, groups labeled Selfish / NonSelfish

Architecture:
    1. Builds a RunConfig (config file, then flags)
    2. Reads the raw input (or generates the default fixture for pipeline)
    3. Reruns every upstream step the command depends on, cleaning once
       and then selecting, sweeping and profiling each configured stage
    4. Matches the profiles of all stages into one set of groups
    5. Stages all artifacts and renames them into the output directory

With several stages, per-stage artifacts go to stage_<name>/ subdirectories;
run_config.json, table.csv, ground_truth.csv, groups.json and the ranking
stay at the top level. Input files inside the output directory are refused.

Exit status: 0 on success, 2 for an invalid config, 1 for any other
library or I/O error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from segmint import __version__, config
from segmint.core import plots
from segmint.core.cluster_engine import SweepReport, sweep
from segmint.core.personality import (
    characterize_groups,
    load_reference_ranking,
    ranking_frame,
    read_ratings_csv,
    selfishness_weights,
)
from segmint.core.preprocess import apply_stage, load_stage, row_ids, run_preprocessing, scale
from segmint.core.profiling import match_groups, pca_project, profile_clustering
from segmint.core.synthgen import default_group_specs, generate, load_group_specs
from segmint.core.tabular import DataTable, load_schema, read_csv, to_matrix
from segmint.core.validation import scores_frame, select_best_k
from segmint.errors import ConfigError, SegmintError
from segmint.schemas import Algorithm, ExpressionProfile, KSelection, RunConfig, StageSpec, Verdict
from segmint.store import MANIFEST_NAME, ArtifactWriter, is_within

logger = logging.getLogger(__name__)

COMMANDS = ("generate", "preprocess", "sweep", "profile", "selfish", "pipeline")
INPUT_FIELDS = ("input_path", "schema_path", "ratings_path", "stage_path", "groups_path")


# ---------- CONFIG ----------

def _field_name(error: ValidationError) -> str:
    first = error.errors()[0]
    return ".".join(str(part) for part in first["loc"]) or "config"


def load_run_config(path: Optional[str], overrides: Optional[dict] = None) -> RunConfig:
    """
    Build a RunConfig from a JSON file and flag overrides (flags win).

    Raises:
        ConfigError: unreadable file, malformed JSON, or an invalid field
    """
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")

    overrides = overrides or {}
    if "stages" in overrides:
        data.pop("stage", None)
    merged = {**data, **overrides}
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(f"invalid config field {_field_name(e)!r}: {e.errors()[0]['msg']}") from e


def _flag_overrides(args: argparse.Namespace) -> dict:
    overrides = {}
    simple = {
        "seed": "seed", "stage": "stages", "out": "output_dir", "input": "input_path",
        "schema": "schema_path", "ratings": "ratings_path", "groups": "groups_path",
        "tau": "tau", "jaccard": "jaccard_threshold", "epsilon": "epsilon",
        "normalization": "normalization", "k_min": "k_min", "k_max": "k_max",
        "restarts": "restarts",
    }
    for flag, field in simple.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field] = value
    if args.algo is not None:
        overrides["algorithms"] = ["kmeans", "clara"] if args.algo == "both" else [args.algo]
    return overrides


# ---------- PIPELINE STEPS ----------

def _schema(cfg: RunConfig):
    return load_schema(cfg.schema_path)


def _generate(cfg: RunConfig) -> tuple[DataTable, np.ndarray]:
    specs = load_group_specs(cfg.groups_path) if cfg.groups_path else default_group_specs()
    if cfg.n_groups_rows is not None:
        specs = [spec.model_copy(update={"size": cfg.n_groups_rows}) for spec in specs]
    return generate(_schema(cfg), specs, cfg.seed, cfg.missing_rate, cfg.duplicate_rate)


def _read_input(cfg: RunConfig) -> DataTable:
    if cfg.input_path is None:
        raise ConfigError("invalid config field 'input_path': required for this command")
    return read_csv(cfg.input_path, _schema(cfg), strict=False)


def _stages(cfg: RunConfig) -> list[StageSpec]:
    return [load_stage(name, cfg.stage_path) for name in cfg.stages]


def _prefix(cfg: RunConfig, stage: StageSpec) -> str:
    """Artifact subdirectory of a stage; none for a single-stage run."""
    return "" if len(cfg.stages) == 1 else f"stage_{stage.name}/"


def _id_values(ids: np.ndarray) -> np.ndarray:
    if ids.dtype.kind == "f" and np.all(np.mod(ids, 1) == 0):
        return ids.astype("int64")
    return ids


def _with_ids(cfg: RunConfig, cleaned: DataTable, staged: DataTable) -> DataTable:
    """Staged table with the surviving client ids put back in front."""
    id_column = cfg.preprocess.id_column
    if not cleaned.has_column(id_column):
        return staged
    return cleaned.select([id_column] + staged.columns)


def _clustering_matrix(cfg: RunConfig, clean: DataTable) -> tuple[np.ndarray, list[str]]:
    matrix, names = to_matrix(clean)
    if cfg.preprocess.scale:
        matrix = scale(matrix)
    return matrix, names


def _sweeps(cfg: RunConfig, matrix: np.ndarray, workers: Optional[int]) -> list[SweepReport]:
    return [sweep(matrix, algorithm, cfg.sweep_config(), workers) for algorithm in cfg.algorithms]


def profiled_k(selection: KSelection) -> int:
    """k to profile: the agreed k, or the algorithm's own index peak on a Range verdict."""
    if selection.verdict is Verdict.AGREED:
        return selection.k_lo
    if selection.algorithm is Algorithm.KMEANS:
        return selection.calinski_k
    return selection.silhouette_k


def _write_sweeps(out: ArtifactWriter, reports: list[SweepReport], ids: Optional[np.ndarray],
                  prefix: str = "") -> list[KSelection]:
    selections = []
    for report in reports:
        algo = report.algorithm.value
        files = {}
        for k in report.ks:
            relative = f"{prefix}assignments/{algo}_k{k}.csv"
            columns = {} if ids is None else {"pid": _id_values(ids)}
            columns["cluster"] = report.result(k).assignments
            out.write_frame(relative, pd.DataFrame(columns))
            files[k] = relative
        out.write_json(f"{prefix}sweep_{algo}.json", report.summary(files))
        selections.append(select_best_k(report))
    scores = scores_frame(reports)
    out.write_frame(f"{prefix}scores.csv", scores)
    out.write_json(f"{prefix}selection.json", {
        "selections": selections,
        "profiled_k": {s.algorithm.value: profiled_k(s) for s in selections},
    })
    plots.index_curves(scores, out.path(f"{prefix}plots/indices.svg"))
    return selections


def _write_profiles(out: ArtifactWriter, cfg: RunConfig, stage: StageSpec, clean: DataTable,
                    matrix: np.ndarray, names: list[str], reports: list[SweepReport],
                    selections: list[KSelection], prefix: str = "") -> list[ExpressionProfile]:
    box_frames = []
    profiles = []
    projection = pca_project(matrix, 2) if matrix.shape[1] >= 2 else None
    for report, selection in zip(reports, selections):
        algo = report.algorithm.value
        k = profiled_k(selection)
        title = f"stage {stage.name}, {algo}, k={k}"
        assignments = report.result(k).assignments
        stats, found = profile_clustering(clean, assignments, cfg.tau, stage.name, algo)
        profiles.extend(found)
        box_frames.append(stats.frame.assign(algorithm=algo))
        plots.boxplot_grid(stats, out.path(f"{prefix}plots/boxplot_{algo}.svg"), title=title)
        if projection is not None:
            plots.biplot(projection, assignments, names, out.path(f"{prefix}plots/biplot_{algo}.svg"), title=title)

    box = pd.concat(box_frames, ignore_index=True)
    out.write_frame(f"{prefix}box_stats.csv", box[["algorithm"] + [c for c in box.columns if c != "algorithm"]])
    out.write_json(f"{prefix}profiles.json", profiles)
    return profiles


def _ranking(cfg: RunConfig, required: bool):
    if cfg.ratings_path is None:
        if required:
            raise ConfigError("invalid config field 'ratings_path': required for this command")
        logger.info("[CLI] No ratings file, using the bundled reference ranking")
        return load_reference_ranking()
    return selfishness_weights(read_ratings_csv(cfg.ratings_path), cfg.normalization)


def _write_ranking(out: ArtifactWriter, ranking) -> None:
    out.write_frame("ranking.csv", ranking_frame(ranking))
    out.write_json("ranking.json", ranking)


def check_paths(cfg: RunConfig, config_path: Optional[str] = None) -> None:
    """
    Refuse runs whose inputs live inside the output directory.

    Raises:
        ConfigError: naming the field whose path the run would replace
    """
    inputs = {field: getattr(cfg, field) for field in INPUT_FIELDS}
    inputs["config"] = config_path
    for field, path in inputs.items():
        if path is not None and is_within(path, cfg.output_dir):
            raise ConfigError(f"invalid config field {field!r}: {path} lies inside output_dir "
                              f"{cfg.output_dir}, which the run replaces")


# ---------- RUN ----------

def run(command: str, cfg: RunConfig, workers: Optional[int] = None,
        config_path: Optional[str] = None) -> Path:
    """
    Execute one command and write its artifacts atomically.

    Preprocessing runs once; every configured stage is then selected,
    swept and profiled on its own, and the profiles of all stages are
    matched into one set of Behavioural Groups.

    Args:
        command: One of COMMANDS
        cfg: Validated run config
        workers: joblib workers for sweeps; SEGMINT_WORKERS when None
        config_path: Config file the run was loaded from, kept out of the output

    Returns:
        The output directory
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")
    check_paths(cfg, config_path)
    logger.info(f"[CLI] segmint {__version__}: {command} -> {cfg.output_dir}")

    with ArtifactWriter(cfg.output_dir) as out:
        out.write_json(MANIFEST_NAME, cfg.manifest())

        if command == "selfish":
            _write_ranking(out, _ranking(cfg, required=True))
            return out.target

        if command == "generate" or (command == "pipeline" and cfg.input_path is None):
            raw, truth = _generate(cfg)
            out.write_table("table.csv", raw)
            out.write_frame("ground_truth.csv", pd.DataFrame({"group": truth}))
            if command == "generate":
                return out.target
        else:
            raw = _read_input(cfg)

        stages = _stages(cfg)
        cleaned, base_log = run_preprocessing(raw, cfg.preprocess)
        ids = row_ids(cleaned, cfg.preprocess.id_column)

        profiles = []
        for stage in stages:
            prefix = _prefix(cfg, stage)
            clean, log = apply_stage(cleaned, stage, base_log)
            out.write_json(f"{prefix}preprocess_log.json", log)
            out.write_table(f"{prefix}preprocessed.csv", _with_ids(cfg, cleaned, clean))
            if command == "preprocess":
                continue

            matrix, names = _clustering_matrix(cfg, clean)
            reports = _sweeps(cfg, matrix, workers)
            selections = _write_sweeps(out, reports, ids, prefix)
            if command == "sweep":
                continue
            profiles.extend(_write_profiles(out, cfg, stage, clean, matrix, names, reports, selections, prefix))

        if command in ("preprocess", "sweep"):
            return out.target

        matching = match_groups(profiles, cfg.jaccard_threshold)
        if command == "pipeline":
            ranking = _ranking(cfg, required=False)
            _write_ranking(out, ranking)
            labeled = characterize_groups(matching.groups, ranking, cfg.epsilon, ignore_unrated=cfg.ignore_unrated)
            matching = matching.model_copy(update={"groups": labeled})
        out.write_json("groups.json", matching)

    return out.target


# ---------- ARGUMENTS ----------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="RunConfig JSON file")
    common.add_argument("--seed", type=int)
    common.add_argument("--stage", nargs="+", help="One or more of A, B, C, or stages defined in the stage file")
    common.add_argument("--algo", choices=["kmeans", "clara", "both"])
    common.add_argument("--out", help="Output directory")
    common.add_argument("--input", help="Input CSV")
    common.add_argument("--schema", help="Schema JSON")
    common.add_argument("--ratings", help="Ratings CSV")
    common.add_argument("--groups", help="GroupSpec JSON for generate")
    common.add_argument("--tau", type=float)
    common.add_argument("--jaccard", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--normalization", choices=["none", "unit_max", "zscore"])
    common.add_argument("--k-min", dest="k_min", type=int)
    common.add_argument("--k-max", dest="k_max", type=int)
    common.add_argument("--restarts", type=int)
    common.add_argument("--workers", type=int, help="Sweep workers (not part of the run config)")
    common.add_argument("--log-level", dest="log_level")

    parser = argparse.ArgumentParser(prog="segmint", description="Behavioural Group extraction")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        commands.add_parser(command, parents=[common])
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    logging.basicConfig(
        level=(args.log_level or config.LOG_LEVEL).upper(),
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )

    try:
        cfg = load_run_config(args.config, _flag_overrides(args))
        if args.workers is not None and args.workers < 1:
            raise ConfigError(f"invalid flag '--workers': {args.workers} must be >= 1")
        run(args.command, cfg, args.workers, args.config)
    except ConfigError as e:
        logger.error(f"[CLI] {e}")
        print(f"segmint: error: {e}", file=sys.stderr)
        return 2
    except (SegmintError, OSError) as e:
        logger.error(f"[CLI] {args.command} failed: {e}")
        print(f"segmint: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
