"""Questionnaire scoring and binary empathy labels."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import FormatError, UndefinedAlphaError, ValidationError

N_ITEMS = 8
LIKERT_MIN, LIKERT_MAX = 1, 5
EMPATHIC = "empathic"
LESS_EMPATHIC = "less_empathic"


@dataclass(frozen=True)
class QuestionnaireResponse:
    participant_id: str
    story_id: str
    items: tuple[int, ...]

    def __post_init__(self):
        items = tuple(self.items)
        object.__setattr__(self, "items", items)
        if len(items) != N_ITEMS:
            raise ValidationError(f"expected {N_ITEMS} items, got {len(items)}")
        for x in items:
            if isinstance(x, bool) or int(x) != x or not LIKERT_MIN <= x <= LIKERT_MAX:
                raise ValidationError(f"Likert item {x!r} outside {LIKERT_MIN}..{LIKERT_MAX}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.participant_id, self.story_id)


def empathy_score(response: QuestionnaireResponse) -> int:
    """Sum of the eight Likert items, in 8..40."""
    if not isinstance(response, QuestionnaireResponse):
        response = QuestionnaireResponse("", "", tuple(response))
    return int(sum(response.items))


def cronbach_alpha(responses: Sequence[QuestionnaireResponse] | np.ndarray) -> float:
    """Internal consistency of the scale, using sample (n-1) variances.

    Accepts responses or a respondents x items matrix.
    """
    if isinstance(responses, np.ndarray):
        table = np.asarray(responses, dtype=float)
    else:
        table = np.array([r.items for r in responses], dtype=float)
    if table.ndim != 2 or table.shape[0] < 2 or table.shape[1] < 2:
        raise ValidationError("cronbach_alpha needs >= 2 respondents and >= 2 items")
    k = table.shape[1]
    total_var = table.sum(axis=1).var(ddof=1)
    if total_var == 0:
        raise UndefinedAlphaError("total score has zero variance")
    item_var = table.var(axis=0, ddof=1).sum()
    return float(k / (k - 1) * (1.0 - item_var / total_var))


@dataclass(frozen=True)
class LabelSet:
    scores: Mapping[tuple[str, str], float]
    median: float
    labels: Mapping[tuple[str, str], str]

    def binary(self, key) -> int:
        return int(self.labels[key] == EMPATHIC)

    def counts(self) -> dict[str, int]:
        vals = list(self.labels.values())
        return {EMPATHIC: vals.count(EMPATHIC), LESS_EMPATHIC: vals.count(LESS_EMPATHIC)}


def median_split(scores: Mapping[tuple[str, str], float]) -> LabelSet:
    """Label sessions empathic when their score is strictly above the sample median."""
    if len(scores) == 0:
        raise ValidationError("median_split needs at least one score")
    if len(scores) < 2:
        raise ValidationError("median_split needs at least two scores")
    med = float(np.median(np.fromiter(scores.values(), dtype=float)))
    labels = {k: EMPATHIC if v > med else LESS_EMPATHIC for k, v in scores.items()}
    return LabelSet(dict(scores), med, labels)


QUESTIONNAIRE_COLUMNS = ("participant_id", "story_id") + tuple(
    f"item_{i}" for i in range(1, N_ITEMS + 1))


def read_questionnaires(path: str | Path) -> list[QuestionnaireResponse]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, skipinitialspace=True)
        if reader.fieldnames is None or any(c not in reader.fieldnames
                                            for c in QUESTIONNAIRE_COLUMNS):
            raise FormatError(f"{path}: header must contain {', '.join(QUESTIONNAIRE_COLUMNS)}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                items = tuple(int(row[f"item_{i}"]) for i in range(1, N_ITEMS + 1))
            except (TypeError, ValueError):
                raise ValidationError(f"{path}:{lineno}: non-integer item") from None
            out.append(QuestionnaireResponse(row["participant_id"], row["story_id"], items))
    return out


def write_questionnaires(responses: Sequence[QuestionnaireResponse], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(QUESTIONNAIRE_COLUMNS)
        for r in responses:
            writer.writerow([r.participant_id, r.story_id, *r.items])


def labels_from_responses(responses: Sequence[QuestionnaireResponse]) -> LabelSet:
    scores = {}
    for r in responses:
        if r.key in scores:
            raise ValidationError(f"duplicate questionnaire for {r.key}")
        scores[r.key] = empathy_score(r)
    return median_split(scores)


LABEL_COLUMNS = ("participant_id", "story_id", "score", "label")


def write_labels(labelset: LabelSet, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LABEL_COLUMNS)
        for key in sorted(labelset.labels):
            writer.writerow([key[0], key[1], labelset.scores[key], labelset.labels[key]])


def read_labels(path: str | Path) -> LabelSet:
    """Reload a label file; the median is recomputed from the stored scores."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or any(c not in reader.fieldnames for c in LABEL_COLUMNS):
            raise FormatError(f"{path}: header must contain {', '.join(LABEL_COLUMNS)}")
        rows = list(reader)
    scores = {(r["participant_id"], r["story_id"]): float(r["score"]) for r in rows}
    stored = {(r["participant_id"], r["story_id"]): r["label"] for r in rows}
    labelset = median_split(scores)
    if dict(labelset.labels) != stored:
        raise ValidationError(f"{path}: labels disagree with the median split of the scores")
    return labelset
