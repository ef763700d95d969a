"""
Personality Profiling
======================
Selfishness weights from rater scores and Selfish / NonSelfish labels for
Behavioural Groups.

Each rater scores every expenditure attribute twice on a 1..7 scale: how
strongly it signals a Selfish personality and how strongly a Non Selfish
one. An attribute's weight is the mean Selfish score minus the mean Non
Selfish score, optionally normalized. A group scores the weights of its
overexpressed expenditure attributes minus those of its underexpressed
ones; beyond +/- epsilon it is labeled Selfish / NonSelfish.

Ratings CSV: one row per rater, columns <attribute>_selfish and
<attribute>_nonselfish, plus an optional rater column.
"""

import logging
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from segmint.core.tabular import default_schema
from segmint.errors import PersonalityError
from segmint.schemas import (
    AttributeCategory,
    BehaviouralGroup,
    GroupLabel,
    Marker,
    Normalization,
    SelfishnessRanking,
)

logger = logging.getLogger(__name__)

SCORE_MIN = 1
SCORE_MAX = 7
_SELFISH = "_selfish"
_NONSELFISH = "_nonselfish"


# ---------- RATINGS ----------

@dataclass(frozen=True)
class RatingsMatrix:
    """r raters x a attributes, two integer scores per cell."""
    raters: tuple[str, ...]
    attributes: tuple[str, ...]
    selfish: np.ndarray
    nonselfish: np.ndarray

    def __post_init__(self):
        r, a = len(self.raters), len(self.attributes)
        if r == 0:
            raise PersonalityError("ratings contain no raters")
        if a == 0:
            raise PersonalityError("ratings contain no attributes")
        if len(set(self.attributes)) != a:
            raise PersonalityError("ratings repeat an attribute")
        for name, scores in (("selfish", self.selfish), ("nonselfish", self.nonselfish)):
            if np.shape(scores) != (r, a):
                raise PersonalityError(f"{name} scores have shape {np.shape(scores)}, expected {(r, a)}")
            bad = np.argwhere((scores < SCORE_MIN) | (scores > SCORE_MAX))
            if len(bad):
                i, j = bad[0]
                raise PersonalityError(
                    f"{name} score {scores[i, j]} of rater {self.raters[i]!r} for {self.attributes[j]!r} "
                    f"is outside [{SCORE_MIN}, {SCORE_MAX}]"
                )

    def swapped(self) -> "RatingsMatrix":
        return RatingsMatrix(self.raters, self.attributes, self.nonselfish, self.selfish)


def read_ratings_csv(path: str | Path) -> RatingsMatrix:
    """
    Load rater scores.

    Args:
        path: CSV with <attribute>_selfish / <attribute>_nonselfish pairs

    Returns:
        RatingsMatrix with attributes in file column order
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except FileNotFoundError as e:
        raise PersonalityError(f"ratings file not found: {path}") from e
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise PersonalityError(f"cannot read ratings file {path}: {e}") from e

    columns = list(frame.columns)
    attributes = [c[: -len(_SELFISH)] for c in columns if c.endswith(_SELFISH)]
    expected = {"rater"} | {a + _SELFISH for a in attributes} | {a + _NONSELFISH for a in attributes}
    for attribute in attributes:
        if attribute + _NONSELFISH not in columns:
            raise PersonalityError(f"{path}: column {attribute + _SELFISH!r} has no {attribute + _NONSELFISH!r} partner")
    extra = [c for c in columns if c not in expected]
    if extra:
        raise PersonalityError(f"{path}: unexpected column {extra[0]!r}")
    if frame.empty:
        raise PersonalityError(f"{path}: no rater rows")

    def parse(suffix: str) -> np.ndarray:
        block = frame[[a + suffix for a in attributes]]
        values = block.apply(pd.to_numeric, errors="coerce")
        invalid = values.isna() | (values != values.round())
        if invalid.to_numpy().any():
            i, j = np.argwhere(invalid.to_numpy())[0]
            raise PersonalityError(f"{path}: non-integer score {block.iat[i, j]!r} at row {i + 1}, "
                                   f"column {block.columns[j]!r}")
        return values.to_numpy(dtype=np.int64)

    if "rater" in columns:
        raters = tuple(frame["rater"].tolist())
    else:
        raters = tuple(f"r{i + 1}" for i in range(len(frame)))
    ratings = RatingsMatrix(raters, tuple(attributes), parse(_SELFISH), parse(_NONSELFISH))
    logger.info(f"[SELFISH] Read {len(raters)} raters x {len(attributes)} attributes from {path}")
    return ratings


# ---------- WEIGHTS ----------

def selfishness_weights(ratings: RatingsMatrix,
                        normalization: Normalization = Normalization.NONE) -> SelfishnessRanking:
    """
    Rank attributes by mean Selfish minus mean Non Selfish score.

    Normalizations: UNIT_MAX divides by the largest |weight|, ZSCORE
    centers and divides by the sample standard deviation; both leave all
    zeros untouched and keep the order.
    """
    raw = ratings.selfish.mean(axis=0) - ratings.nonselfish.mean(axis=0)
    normalization = Normalization(normalization)

    if normalization is Normalization.UNIT_MAX:
        peak = float(np.abs(raw).max())
        weights = raw / peak if peak > 0 else np.zeros_like(raw)
    elif normalization is Normalization.ZSCORE:
        sd = float(raw.std(ddof=1)) if len(raw) > 1 else 0.0
        weights = (raw - raw.mean()) / sd if sd > 0 else np.zeros_like(raw)
    else:
        weights = raw

    ranking = SelfishnessRanking.from_weights(
        {a: float(w) for a, w in zip(ratings.attributes, weights)}, normalization
    )
    logger.info(f"[SELFISH] Ranking ({normalization.value}): {', '.join(ranking.order)}")
    return ranking


def load_reference_ranking(path: Optional[str | Path] = None) -> SelfishnessRanking:
    """Published reference weights (bundled), or a ranking JSON file."""
    try:
        if path is None:
            text = resources.files("segmint").joinpath("data", "selfishness_reference.json").read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        return SelfishnessRanking.model_validate_json(text)
    except OSError as e:
        raise PersonalityError(f"cannot read ranking file {path}: {e}") from e
    except ValidationError as e:
        raise PersonalityError(f"invalid ranking file {path or 'selfishness_reference.json'}: {e}") from e


def ranking_frame(ranking: SelfishnessRanking) -> pd.DataFrame:
    return pd.DataFrame(
        [e.model_dump() for e in ranking.entries], columns=["attribute", "weight", "rank"]
    )


# ---------- GROUP LABELING ----------

def default_expenditure_attributes() -> list[str]:
    return [s.name for s in default_schema() if s.category is AttributeCategory.EXPENDITURE]


def characterize_groups(groups: Sequence[BehaviouralGroup], ranking: SelfishnessRanking,
                        epsilon: float = 0.1, expenditure: Optional[Iterable[str]] = None,
                        ignore_unrated: bool = False) -> list[BehaviouralGroup]:
    """
    Label each group Selfish, NonSelfish or Unlabeled.

    Args:
        groups: Behavioural Groups with signatures
        ranking: Selfishness weights
        epsilon: Dead zone around zero, >= 0
        expenditure: Attributes counted as expenditure; the CCCS
                     expenditure category when None
        ignore_unrated: Skip (with a warning) expenditure markers the
                        ranking does not cover instead of failing

    Returns:
        Copies of the groups with label and selfishness_score filled in
    """
    if epsilon < 0:
        raise PersonalityError(f"epsilon={epsilon} must be non-negative")
    spend = set(default_expenditure_attributes() if expenditure is None else expenditure)
    weights = ranking.weights

    labeled = []
    for group in groups:
        score = 0.0
        for attribute in sorted(group.signature):
            marker = group.signature[attribute]
            if attribute not in spend or marker is Marker.NEUTRAL:
                continue
            if attribute not in weights:
                if not ignore_unrated:
                    raise PersonalityError(
                        f"group {group.group_id}: expenditure attribute {attribute!r} has no selfishness weight"
                    )
                logger.warning(f"[SELFISH] Group {group.group_id}: unrated attribute {attribute!r} ignored")
                continue
            score += weights[attribute] if marker is Marker.OVER else -weights[attribute]

        if score > epsilon:
            label = GroupLabel.SELFISH
        elif score < -epsilon:
            label = GroupLabel.NON_SELFISH
        else:
            label = GroupLabel.UNLABELED
        logger.info(f"[SELFISH] Group {group.group_id}: score {score:+.3f} -> {label.value}")
        labeled.append(group.model_copy(update={"label": label, "selfishness_score": score}))
    return labeled
