"""Interpretability outputs: ranked feature contributions with group-difference
tests, class-conditional 1 Hz curves, and feature-group ablation."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import UnsupportedOperationError, ValidationError
from .features import ResampledSequence, SummaryTable, split_summary_name
from .harness import METRICS, CVConfig, CVReport, run_cv
from .labels import EMPATHIC, LabelSet
from .stats import TestResult, welch_t_test

log = logging.getLogger(__name__)

HIGHER = "higher_in_empathic"
LOWER = "lower_in_empathic"
ALPHA = 0.01
ALL_FEATURES = "all"


@dataclass(frozen=True)
class FeatureFinding:
    name: str
    feature: str
    statistic: str
    importance: float
    test: TestResult | None
    direction: str
    significant: bool
    mean_empathic: float
    mean_less_empathic: float

    def row(self) -> list:
        t = self.test
        return [self.name, self.feature, self.statistic, repr(self.importance),
                "" if t is None else repr(t.statistic), "" if t is None else repr(t.dof),
                "" if t is None else repr(t.p_value), self.direction, int(self.significant),
                repr(self.mean_empathic), repr(self.mean_less_empathic)]


FINDING_COLUMNS = ["name", "feature", "statistic", "importance", "welch_t", "welch_dof",
                   "p_value", "direction", "significant", "mean_empathic", "mean_less_empathic"]


def mean_importances(report: CVReport) -> np.ndarray:
    """Per-feature importance averaged over all folds (0 where unselected)."""
    index = {n: i for i, n in enumerate(report.feature_names)}
    total = np.zeros(len(report.feature_names))
    for f in report.folds:
        if f.importances is None:
            raise UnsupportedOperationError(
                f"{report.config.model.algorithm} does not provide feature importances")
        for name, imp in zip(f.selected, f.importances):
            total[index[name]] += imp
    return total / len(report.folds)


def rank_feature_contributions(report: CVReport, top_n: int = 25,
                               table: SummaryTable | None = None) -> list[FeatureFinding]:
    """Top features by mean fold importance, each with a Welch test between classes."""
    table = table if table is not None else report.table
    if table is None or table.y is None:
        raise ValidationError("rank_feature_contributions needs the labeled summary table")
    if list(table.names) != list(report.feature_names):
        raise ValidationError("summary table columns do not match the report")
    imp = mean_importances(report)
    order = np.lexsort((np.arange(len(imp)), -imp))[:top_n]
    pos = table.y == 1
    out = []
    for j in order:
        a, b = table.X[pos, j], table.X[~pos, j]
        try:
            test = welch_t_test(a, b)
        except ValidationError:
            test = None
        diff = a.mean() - b.mean()
        feature, stat = split_summary_name(table.names[j])
        out.append(FeatureFinding(table.names[j], feature, stat, float(imp[j]), test,
                                  HIGHER if diff > 0 else LOWER,
                                  bool(test is not None and test.p_value < ALPHA),
                                  float(a.mean()), float(b.mean())))
    return out


def findings_csv(findings: Sequence[FeatureFinding]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank"] + FINDING_COLUMNS)
    for i, f in enumerate(findings, start=1):
        w.writerow([i] + f.row())
    return buf.getvalue()


@dataclass(frozen=True)
class ClassCurves:
    feature: str
    seconds: np.ndarray
    empathic: np.ndarray           # NaN where no empathic session covers the bin
    less_empathic: np.ndarray
    n_empathic: np.ndarray
    n_less_empathic: np.ndarray
    mean_empathic: float
    mean_less_empathic: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["second", "empathic", "less_empathic", "n_empathic", "n_less_empathic"])
        for row in zip(self.seconds, self.empathic, self.less_empathic,
                       self.n_empathic, self.n_less_empathic):
            w.writerow([int(row[0]), "" if np.isnan(row[1]) else repr(float(row[1])),
                        "" if np.isnan(row[2]) else repr(float(row[2])), int(row[3]), int(row[4])])
        w.writerow([])
        w.writerow(["group_mean", repr(self.mean_empathic), repr(self.mean_less_empathic)])
        return buf.getvalue()


def class_conditional_curves(sequences: Sequence[ResampledSequence], labels: LabelSet,
                             feature: str) -> ClassCurves:
    """Per-second class means of one feature, plus each class's mean of per-session means.

    Sessions only contribute to the seconds they cover.
    """
    if not sequences:
        raise ValidationError("no sequences given")
    cols, classes = [], []
    for seq in sequences:
        if feature not in seq.names:
            raise ValidationError(f"unknown feature {feature!r} in session {seq.key}")
        if seq.key not in labels.labels:
            raise ValidationError(f"no label for session {seq.key}")
        cols.append(seq.column(feature))
        classes.append(labels.labels[seq.key] == EMPATHIC)
    classes = np.array(classes)
    if classes.all() or not classes.any():
        raise ValidationError("both classes must be present")
    start = min(s.start for s in sequences)
    stop = max(s.start + len(s.matrix) for s in sequences)
    n_bins = stop - start
    sums = np.zeros((2, n_bins))
    counts = np.zeros((2, n_bins), dtype=np.int64)
    for seq, col, emp in zip(sequences, cols, classes):
        off = seq.start - start
        sums[int(emp), off:off + len(col)] += col
        counts[int(emp), off:off + len(col)] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        curves = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    session_means = np.array([c.mean() for c in cols])
    return ClassCurves(feature, np.arange(start, stop), curves[1], curves[0], counts[1],
                       counts[0], float(session_means[classes].mean()),
                       float(session_means[~classes].mean()))


@dataclass
class SubsetComparison:
    reports: dict[str, CVReport]
    sizes: dict[str, int]

    def accuracy(self) -> dict[str, float]:
        return {g: r.aggregate["accuracy"] for g, r in self.reports.items()}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", "n_features", "k_best", *METRICS])
        for g, r in self.reports.items():
            agg = r.aggregate
            w.writerow([g, self.sizes[g], r.config.k_best,
                        *("" if agg[m] is None else repr(agg[m]) for m in METRICS)])
        return buf.getvalue()


def subset_evaluation(table: SummaryTable, groups: Mapping[str, Sequence[str]],
                      config: CVConfig, jobs: int = 1) -> SubsetComparison:
    """Cross-validate on each feature group's summary columns, then on all columns."""
    raw_of = {n: split_summary_name(n)[0] for n in table.names}
    seen = {}
    for g, feats in groups.items():
        for f in feats:
            if f in seen:
                raise ValidationError(f"feature {f} appears in groups {seen[f]} and {g}")
            seen[f] = g
    reports, sizes = {}, {}
    for g, feats in groups.items():
        members = set(feats)
        cols = [n for n in table.names if raw_of[n] in members]
        if not cols:
            log.warning("feature group %s has no columns in the table; skipped", g)
            continue
        cfg = CVConfig(config.model, config.folds, config.repeats,
                       min(config.k_best, len(cols)), config.seed)
        reports[g] = run_cv(table.columns(cols), cfg, jobs)
        sizes[g] = len(cols)
    reports[ALL_FEATURES] = run_cv(table, config, jobs)
    sizes[ALL_FEATURES] = len(table.names)
    return SubsetComparison(reports, sizes)
