"""Leakage-free repeated stratified cross-validation.

Per fold, in order: fit the scaler on the training rows, rank features by
ANOVA F on the standardized training rows and keep the top ``k_best``, fit
the model, then score the held-out rows.  Nothing computed from test rows
feeds back into any fitted artifact.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import learners
from .errors import ComparisonError, StratificationError, UnsupportedOperationError, ValidationError
from .features import SummaryTable
from .learners import ModelSpec, TrainedModel
from .stats import MetricReport, TestResult, classification_metrics, mcnemar_test

METRICS = ("accuracy", "auc_roc", "auc_pr", "precision_macro", "recall_macro")


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    scale: np.ndarray

    def to_dict(self):
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}


def standardize_fit(train_X) -> Scaler:
    X = np.asarray(train_X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValidationError("standardize_fit needs a 2-D array with >= 2 rows")
    if not np.all(np.isfinite(X)):
        raise ValidationError("training matrix contains non-finite values")
    return Scaler(X.mean(axis=0), X.std(axis=0, ddof=1))


def standardize_apply(scaler: Scaler, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(scaler.mean):
        raise ValidationError(f"scaler fitted on {len(scaler.mean)} columns, got shape {X.shape}")
    safe = np.where(scaler.scale > 0, scaler.scale, 1.0)
    out = (X - scaler.mean) / safe
    out[:, scaler.scale == 0] = 0.0
    return out


def anova_f(X, y) -> np.ndarray:
    """One-way ANOVA F statistic of each column across the label groups.

    Columns with zero total variance get NaN; columns with zero within-group
    variance but distinct group means get +inf.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    classes = np.unique(y)
    n, k = len(y), len(classes)
    if k < 2:
        raise ValidationError("anova_f needs at least two classes")
    grand = X.mean(axis=0)
    between = np.zeros(X.shape[1])
    within = np.zeros(X.shape[1])
    for c in classes:
        Xc = X[y == c]
        mc = Xc.mean(axis=0)
        between += len(Xc) * (mc - grand) ** 2
        within += ((Xc - mc) ** 2).sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (between / (k - 1)) / (within / (n - k))
    f[(within == 0) & (between > 0)] = np.inf
    f[(within == 0) & (between == 0)] = np.nan
    return f


def select_top_k_features(train_X, train_y, k: int) -> np.ndarray:
    """Indices (ascending) of the ``k`` columns with the largest ANOVA F.

    Equal scores prefer the lower index; undefined scores rank last.
    """
    X = np.asarray(train_X, dtype=float)
    if not 1 <= k <= X.shape[1]:
        raise ValidationError(f"k={k} outside 1..{X.shape[1]}")
    f = anova_f(X, train_y)
    key = np.where(np.isnan(f), -np.inf, f)
    order = np.lexsort((np.arange(len(key)), np.isnan(f), -key))
    return np.sort(order[:k])


@dataclass(frozen=True)
class CVConfig:
    model: ModelSpec
    folds: int = 5
    repeats: int = 10
    k_best: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2:
            raise ValidationError("folds must be >= 2")
        if self.repeats < 1:
            raise ValidationError("repeats must be >= 1")
        if self.k_best < 1:
            raise ValidationError("k_best must be >= 1")

    def to_dict(self):
        return {"folds": self.folds, "repeats": self.repeats, "k_best": self.k_best,
                "seed": int(self.seed), "model": self.model.to_dict()}

    @classmethod
    def from_dict(cls, d: Mapping) -> "CVConfig":
        return cls(ModelSpec.from_dict(d["model"]), int(d.get("folds", 5)),
                   int(d.get("repeats", 10)), int(d.get("k_best", 25)), int(d.get("seed", 0)))


def derive_seed(*parts: int) -> int:
    """Deterministic 64-bit seed from a tuple of non-negative integers."""
    state = np.random.SeedSequence([int(p) for p in parts]).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


def stratified_folds(y, folds: int, seed: int, repeat: int = 0) -> np.ndarray:
    """Fold number of every sample: shuffle each class, then deal round-robin."""
    y = np.asarray(y)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2 or counts.min() < folds:
        raise StratificationError(
            f"every class needs at least {folds} samples; class counts "
            f"{dict(zip(classes.tolist(), counts.tolist()))}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(repeat)]))
    assign = np.empty(len(y), dtype=np.int64)
    for c in classes:
        members = np.flatnonzero(y == c)
        members = members[rng.permutation(len(members))]
        assign[members] = np.arange(len(members)) % folds
    return assign


@dataclass
class FoldArtifacts:
    scaler: Scaler
    selected: np.ndarray
    model: TrainedModel

    def serialize(self) -> str:
        return json.dumps({"scaler": self.scaler.to_dict(),
                           "selected": self.selected.tolist(),
                           "model": json.loads(learners.dumps(self.model))}, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()


def fit_fold(train_X, train_y, k_best: int, spec: ModelSpec,
             names: Sequence[str] | None = None) -> FoldArtifacts:
    scaler = standardize_fit(train_X)
    Z = standardize_apply(scaler, train_X)
    selected = select_top_k_features(Z, train_y, min(k_best, Z.shape[1]))
    sel_names = [names[i] for i in selected] if names is not None else None
    model = learners.fit(spec, Z[:, selected], train_y, sel_names)
    return FoldArtifacts(scaler, selected, model)


@dataclass
class FoldResult:
    repeat: int
    fold: int
    test_index: list[int]
    test_ids: list[tuple[str, str]]
    y_true: list[int]
    predictions: list[int]
    scores: list[float]
    metrics: MetricReport
    selected: list[str]
    importances: list[float] | None
    artifact_digest: str

    def to_record(self) -> dict:
        return {
            "type": "fold", "repeat": self.repeat, "fold": self.fold,
            "test_index": self.test_index, "test_ids": [list(k) for k in self.test_ids],
            "y_true": self.y_true, "predictions": self.predictions, "scores": self.scores,
            "metrics": self.metrics.to_dict(), "selected": self.selected,
            "importances": self.importances, "artifact_digest": self.artifact_digest,
        }

    @classmethod
    def from_record(cls, r: Mapping) -> "FoldResult":
        return cls(r["repeat"], r["fold"], list(r["test_index"]),
                   [tuple(k) for k in r["test_ids"]], list(r["y_true"]),
                   list(r["predictions"]), list(r["scores"]), MetricReport(**r["metrics"]),
                   list(r["selected"]), r["importances"], r["artifact_digest"])


@dataclass
class CVReport:
    config: CVConfig
    keys: list[tuple[str, str]]
    feature_names: list[str]
    folds: list[FoldResult]
    table: SummaryTable | None = field(default=None, repr=False, compare=False)

    @property
    def aggregate(self) -> dict[str, float | None]:
        out = {}
        for m in METRICS:
            vals = [getattr(f.metrics, m) for f in self.folds]
            vals = [v for v in vals if v is not None]
            out[m] = float(np.mean(vals)) if vals else None
        return out

    def correctness(self) -> np.ndarray:
        """repeats x samples matrix of out-of-fold correctness."""
        out = np.zeros((self.config.repeats, len(self.keys)), dtype=bool)
        seen = np.zeros_like(out)
        for f in self.folds:
            idx = np.asarray(f.test_index)
            out[f.repeat, idx] = np.asarray(f.predictions) == np.asarray(f.y_true)
            seen[f.repeat, idx] = True
        if not seen.all():
            raise ValidationError("report does not cover every sample in every repeat")
        return out

    def fold_structure(self) -> list[tuple[int, int, tuple[int, ...]]]:
        return [(f.repeat, f.fold, tuple(f.test_index)) for f in self.folds]

    def to_records(self) -> list[dict]:
        head = {"type": "config", "config": self.config.to_dict(),
                "keys": [list(k) for k in self.keys], "feature_names": self.feature_names,
                "mcnemar_pairing": "pooled over all repeats"}
        tail = {"type": "aggregate", **self.aggregate, "n_folds": len(self.folds)}
        return [head] + [f.to_record() for f in self.folds] + [tail]

    def dumps(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.to_records())

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["model", "folds", "repeats", "k_best", "n_folds", *METRICS])
        agg = self.aggregate
        w.writerow([self.config.model.algorithm, self.config.folds, self.config.repeats,
                    self.config.k_best, len(self.folds),
                    *("" if agg[m] is None else repr(agg[m]) for m in METRICS)])
        return buf.getvalue()

    def save(self, directory: str | Path, stem: str = "report") -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        records = directory / f"{stem}.jsonl"
        summary = directory / f"{stem}_summary.csv"
        records.write_text(self.dumps())
        summary.write_text(self.summary_csv())
        return records, summary

    @classmethod
    def loads(cls, text: str) -> "CVReport":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not rows or rows[0].get("type") != "config":
            raise ValidationError("report must start with a config record")
        head = rows[0]
        folds = [FoldResult.from_record(r) for r in rows[1:] if r.get("type") == "fold"]
        return cls(CVConfig.from_dict(head["config"]), [tuple(k) for k in head["keys"]],
                   list(head["feature_names"]), folds)

    @classmethod
    def load(cls, path: str | Path) -> "CVReport":
        return cls.loads(Path(path).read_text())


def _fold_spec(config: CVConfig, repeat: int, fold: int) -> ModelSpec:
    return config.model.with_seed(derive_seed(config.seed, config.model.seed, repeat, fold))


def _run_fold(task):
    X, y, names, keys, config, repeat, fold, test = task
    train = np.setdiff1d(np.arange(len(y)), test)
    art = fit_fold(X[train], y[train], config.k_best, _fold_spec(config, repeat, fold), names)
    Zt = standardize_apply(art.scaler, X[test])[:, art.selected]
    scores = learners.predict_scores(art.model, Zt)
    preds = (scores > art.model.threshold).astype(np.int64)
    metrics = classification_metrics(y[test], preds, scores)
    try:
        imp = learners.feature_importances(art.model).tolist()
    except UnsupportedOperationError:
        imp = None
    return FoldResult(repeat, fold, test.tolist(), [keys[i] for i in test],
                      y[test].tolist(), preds.tolist(), scores.tolist(), metrics,
                      [names[i] for i in art.selected], imp, art.digest())


def fold_partitions(y, config: CVConfig) -> list[tuple[int, int, np.ndarray]]:
    parts = []
    for r in range(config.repeats):
        assign = stratified_folds(y, config.folds, config.seed, r)
        for f in range(config.folds):
            parts.append((r, f, np.flatnonzero(assign == f)))
    return parts


def fold_artifacts(table: SummaryTable, config: CVConfig, repeat: int, fold: int) -> FoldArtifacts:
    """Re-fit one fold's scaler, selection and model exactly as :func:`run_cv` does."""
    for r, f, test in fold_partitions(table.y, config):
        if (r, f) == (repeat, fold):
            train = np.setdiff1d(np.arange(len(table)), test)
            return fit_fold(table.X[train], table.y[train], config.k_best,
                            _fold_spec(config, r, f), table.names)
    raise ValidationError(f"no fold ({repeat}, {fold})")


def run_cv(table: SummaryTable, config: CVConfig, jobs: int = 1) -> CVReport:
    if table.y is None:
        raise ValidationError("run_cv needs a labeled summary table")
    if config.k_best > table.X.shape[1]:
        raise ValidationError(f"k_best={config.k_best} exceeds {table.X.shape[1]} features")
    if not np.all(np.isfinite(table.X)):
        raise ValidationError("summary table contains non-finite values")
    tasks = [(table.X, table.y, list(table.names), list(table.keys), config, r, f, test)
             for r, f, test in fold_partitions(table.y, config)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            folds = list(pool.map(_run_fold, tasks))
    else:
        folds = [_run_fold(t) for t in tasks]
    return CVReport(config, list(table.keys), list(table.names), folds, table)


def compare_models(report_a: CVReport, report_b: CVReport) -> TestResult:
    """McNemar test on out-of-fold correctness pooled over every repeat."""
    if report_a.keys != report_b.keys:
        raise ComparisonError("reports cover different samples")
    if report_a.fold_structure() != report_b.fold_structure():
        raise ComparisonError("reports use different fold structures")
    if report_a.config.seed != report_b.config.seed:
        raise ComparisonError("reports were produced with different seeds")
    a = report_a.correctness().ravel()
    b = report_b.correctness().ravel()
    res = mcnemar_test(a, b)
    detail = {**(res.detail or {}), "pairs": int(a.size), "pairing": "pooled over all repeats"}
    return TestResult(res.statistic, res.p_value, res.dof, res.test_name, detail)


def grid_search(table: SummaryTable, grid: Sequence[ModelSpec], config: CVConfig,
                jobs: int = 1) -> list[tuple[ModelSpec, CVReport]]:
    """Cross-validate every spec under one protocol; best accuracy (then ROC-AUC) first."""
    if not grid:
        raise ValidationError("grid_search needs at least one model spec")
    results = []
    for spec in grid:
        cfg = CVConfig(spec, config.folds, config.repeats, config.k_best, config.seed)
        results.append((spec, run_cv(table, cfg, jobs)))

    def key(item):
        agg = item[1].aggregate
        auc = agg["auc_roc"] if agg["auc_roc"] is not None else -1.0
        return (-agg["accuracy"], -auc)

    return sorted(results, key=key)
