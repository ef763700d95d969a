"""
Artifact Storage Module
========================
Atomic persistence of a run's output directory.

All artifacts of a command are written into a hidden staging directory
next to the target; on success the staging directory replaces the target
in one rename, on failure it is removed. A reader never sees a half
written run, and a failed run never leaves partial files behind. Only an
empty directory or a previous run (one holding run_config.json) is ever
replaced, and the working directory or its parents are refused.

Formats:
- JSON: indent 2, trailing newline, NaN/inf rejected
- CSV: pandas, "\\n" line endings, no index column
- SVG: rendered by segmint.core.plots into a staged path
"""

import json
import logging
import os
import shutil
import tempfile
from pathlib import Path
from typing import Any

import pandas as pd
from pydantic import BaseModel

from segmint.core.tabular import DataTable, write_csv
from segmint.errors import StoreError

logger = logging.getLogger(__name__)


def to_jsonable(obj: Any) -> Any:
    if isinstance(obj, BaseModel):
        return obj.model_dump(mode="json")
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(item) for item in obj]
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), indent=2, allow_nan=False) + "\n"


MANIFEST_NAME = "run_config.json"


def is_within(path: str | Path, directory: str | Path) -> bool:
    """True when path resolves to directory itself or somewhere below it."""
    return Path(path).resolve().is_relative_to(Path(directory).resolve())


class ArtifactWriter:
    """
    Context manager staging artifacts for one output directory.

    The target may be missing, empty, or a previous run (it holds a
    run_config.json); anything else is refused before work starts.

    Args:
        target: Final output directory (replaced if it is a previous run)
    """

    def __init__(self, target: str | Path):
        self.target = Path(target).resolve()
        self._staging: Path | None = None
        self.written: list[str] = []

    def _check_target(self) -> None:
        if is_within(Path.cwd(), self.target):
            raise StoreError(f"output directory {self.target} is the working directory or one of its parents")
        if not self.target.exists():
            return
        if not self.target.is_dir():
            raise StoreError(f"output path {self.target} exists and is not a directory")
        if any(self.target.iterdir()) and not (self.target / MANIFEST_NAME).is_file():
            raise StoreError(f"output directory {self.target} is not empty and holds no {MANIFEST_NAME}; "
                             f"refusing to replace it")

    def __enter__(self) -> "ArtifactWriter":
        self._check_target()
        self.target.parent.mkdir(parents=True, exist_ok=True)
        self._staging = Path(tempfile.mkdtemp(prefix=f".{self.target.name}.", dir=self.target.parent))
        logger.debug(f"[STORE] Staging {self.target} in {self._staging}")
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        staging, self._staging = self._staging, None
        if exc_type is not None:
            shutil.rmtree(staging, ignore_errors=True)
            logger.warning(f"[STORE] Run failed, discarded staged artifacts for {self.target}")
            return False

        backup = None
        try:
            if self.target.exists():
                backup = Path(tempfile.mkdtemp(prefix=f".{self.target.name}.old.", dir=self.target.parent))
                os.replace(self.target, backup / "previous")
            os.replace(staging, self.target)
        except OSError:
            if backup is not None and (backup / "previous").exists() and not self.target.exists():
                os.replace(backup / "previous", self.target)
            logger.error(f"[STORE] Could not move staged artifacts into {self.target}")
            raise
        finally:
            shutil.rmtree(staging, ignore_errors=True)
            if backup is not None:
                shutil.rmtree(backup, ignore_errors=True)
        logger.info(f"[STORE] Wrote {len(self.written)} artifacts to {self.target}")
        return False

    # ---------- WRITERS ----------

    def path(self, relative: str) -> Path:
        """Staged location of an artifact, parent directories created."""
        if self._staging is None:
            raise RuntimeError("ArtifactWriter used outside its context")
        destination = self._staging / relative
        destination.parent.mkdir(parents=True, exist_ok=True)
        self.written.append(relative)
        return destination

    def write_json(self, relative: str, obj: Any) -> None:
        self.path(relative).write_text(dumps(obj), encoding="utf-8")

    def write_frame(self, relative: str, frame: pd.DataFrame) -> None:
        frame.to_csv(self.path(relative), index=False, lineterminator="\n", encoding="utf-8")

    def write_table(self, relative: str, table: DataTable) -> None:
        write_csv(table, self.path(relative))
