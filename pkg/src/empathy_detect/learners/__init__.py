"""Binary classifiers behind one fit / score / label / importance contract.

Score semantics per algorithm:

=========================  ===============================  =========
algorithm                  score                            threshold
=========================  ===============================  =========
logistic_regression        P(y=1), logistic link            0.5
gradient_boosted_trees     P(y=1), logistic of tree margin  0.5
decision_tree              positive fraction in the leaf    0.5
bagging, random_forest     fraction of trees voting 1       0.5
adaboost                   alpha-weighted vote fraction     0.5
linear_svm                 signed margin w.x + b            0.0
chance_baseline            1.0                              0.5
=========================  ===============================  =========

A sample is positive only when its score is strictly above the threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from ..errors import (
    DegenerateLabelsError,
    FormatError,
    UnsupportedOperationError,
    ValidationError,
)
from . import ensemble, linear
from .tree import Tree, grow_gini_tree

FORMAT = "empathy-detect-model/1"

DEFAULTS: dict[str, dict[str, Any]] = {
    "logistic_regression": {"l2": 1.0, "max_iter": 1000, "tol": 1e-6},
    "linear_svm": {"C": 1.0, "epochs": 200},
    "decision_tree": {"max_depth": None, "min_samples_leaf": 1},
    "bagging": {"n_estimators": 100, "max_depth": None, "min_samples_leaf": 1},
    "random_forest": {"n_estimators": 100, "max_depth": None, "min_samples_leaf": 1,
                      "max_features": "sqrt"},
    "adaboost": {"n_estimators": 100, "learning_rate": 1.0},
    "gradient_boosted_trees": {"n_estimators": 100, "learning_rate": 0.12, "max_depth": 6,
                               "reg_lambda": 1.0, "min_child_weight": 1.0, "gamma": 0.0,
                               "subsample": 1.0, "sampling": "uniform"},
    "chance_baseline": {},
}
ALGORITHMS = tuple(DEFAULTS)
MARGIN_MODELS = {"linear_svm"}
LINEAR_MODELS = {"logistic_regression", "linear_svm"}


@dataclass(frozen=True)
class ModelSpec:
    algorithm: str
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in DEFAULTS:
            raise ValidationError(
                f"unknown algorithm {self.algorithm!r}; expected one of {', '.join(ALGORITHMS)}")
        unknown = sorted(set(self.hyperparameters) - set(DEFAULTS[self.algorithm]))
        if unknown:
            raise ValidationError(
                f"unknown hyperparameters for {self.algorithm}: {', '.join(unknown)}")
        if self.algorithm == "gradient_boosted_trees":
            if self.hyperparameters.get("sampling", "uniform") != "uniform":
                raise ValidationError("gradient_boosted_trees supports sampling='uniform' only")
            sub = self.hyperparameters.get("subsample", 1.0)
            if not 0 < sub <= 1:
                raise ValidationError("subsample must be in (0, 1]")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "hyperparameters", dict(self.hyperparameters))

    @property
    def params(self) -> dict[str, Any]:
        """Hyperparameters with defaults filled in."""
        return {**DEFAULTS[self.algorithm], **self.hyperparameters}

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "hyperparameters": dict(self.hyperparameters),
                "seed": int(self.seed)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        return cls(d["algorithm"], dict(d.get("hyperparameters", {})), int(d.get("seed", 0)))

    def with_seed(self, seed: int) -> "ModelSpec":
        return ModelSpec(self.algorithm, self.hyperparameters, seed)


@dataclass(frozen=True, eq=False)
class TrainedModel:
    spec: ModelSpec
    feature_count: int
    state: dict
    feature_names: tuple[str, ...] | None = None

    @property
    def threshold(self) -> float:
        return 0.0 if self.spec.algorithm in MARGIN_MODELS else 0.5


def _check_X(X, feature_count=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValidationError(f"X must be 2-D, got shape {X.shape}")
    if feature_count is not None and X.shape[1] != feature_count:
        raise ValidationError(f"model expects {feature_count} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("X contains non-finite values")
    return X


def fit(spec: ModelSpec, X, y, feature_names: Sequence[str] | None = None) -> TrainedModel:
    X = _check_X(X)
    y = np.asarray(y)
    if y.shape != (X.shape[0],):
        raise ValidationError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
    if not np.all((y == 0) | (y == 1)):
        raise ValidationError("labels must be 0 or 1")
    y = y.astype(float)
    algo = spec.algorithm
    if algo != "chance_baseline" and (y.min() == y.max()):
        raise DegenerateLabelsError("training labels contain a single class")
    if feature_names is not None and len(feature_names) != X.shape[1]:
        raise ValidationError("feature_names length does not match X")
    p = spec.params
    n_feat = X.shape[1]

    if algo == "chance_baseline":
        state = {}
    elif algo == "logistic_regression":
        state = linear.fit_logistic(X, y, p["l2"], int(p["max_iter"]), p["tol"])
        state["scale"] = X.std(axis=0, ddof=1) if len(X) > 1 else np.ones(n_feat)
    elif algo == "linear_svm":
        state = linear.fit_linear_svm(X, y, p["C"], int(p["epochs"]),
                                      rng=np.random.default_rng(spec.seed))
        state["scale"] = X.std(axis=0, ddof=1) if len(X) > 1 else np.ones(n_feat)
    elif algo == "decision_tree":
        state = {"trees": [grow_gini_tree(X, y, max_depth=p["max_depth"],
                                          min_samples_leaf=p["min_samples_leaf"])]}
    elif algo in ("bagging", "random_forest"):
        state = {"trees": ensemble.fit_bagged_trees(
            X, y, spec.seed, int(p["n_estimators"]), p["max_depth"], p["min_samples_leaf"],
            p.get("max_features"))}
    elif algo == "adaboost":
        stumps, alphas, errors = ensemble.fit_adaboost(X, y, int(p["n_estimators"]),
                                                       p["learning_rate"])
        state = {"trees": stumps, "alphas": alphas, "errors": errors}
    elif algo == "gradient_boosted_trees":
        trees, losses = ensemble.fit_gradient_boosting(
            X, y, spec.seed, int(p["n_estimators"]), p["learning_rate"], p["max_depth"],
            p["reg_lambda"], p["min_child_weight"], p["gamma"], p["subsample"])
        state = {"trees": trees, "train_loss": losses}
    else:  # pragma: no cover - guarded by ModelSpec
        raise ValidationError(algo)
    names = tuple(feature_names) if feature_names is not None else None
    return TrainedModel(spec, n_feat, state, names)


def predict_scores(model: TrainedModel, X) -> np.ndarray:
    X = _check_X(X, model.feature_count)
    algo = model.spec.algorithm
    st = model.state
    if algo == "chance_baseline":
        return np.ones(len(X))
    if algo == "logistic_regression":
        return linear.sigmoid(X @ st["weights"] + st["intercept"])
    if algo == "linear_svm":
        return X @ st["weights"] + st["intercept"]
    if algo == "decision_tree":
        return st["trees"][0].predict(X)
    if algo in ("bagging", "random_forest"):
        return ensemble.vote_fraction(st["trees"], X)
    if algo == "adaboost":
        return ensemble.adaboost_scores(st["trees"], st["alphas"], X)
    return linear.sigmoid(ensemble.boosting_margin(st["trees"], X))


def predict_labels(model: TrainedModel, X) -> np.ndarray:
    return (predict_scores(model, X) > model.threshold).astype(np.int64)


def feature_importances(model: TrainedModel) -> np.ndarray:
    """Non-negative per-feature contributions summing to 1 (all zero if nothing split).

    Trees: total impurity / loss gain per feature.  Linear models: |weight|
    times the training standard deviation of the feature.
    """
    algo = model.spec.algorithm
    if algo == "chance_baseline":
        raise UnsupportedOperationError("chance_baseline has no feature importances")
    st = model.state
    if algo in LINEAR_MODELS:
        raw = np.abs(st["weights"]) * st["scale"]
    elif algo == "adaboost":
        raw = sum(a * t.gain_by_feature(model.feature_count)
                  for t, a in zip(st["trees"], st["alphas"]))
    else:
        raw = sum(t.gain_by_feature(model.feature_count) for t in st["trees"])
    raw = np.asarray(raw, dtype=float)
    total = raw.sum()
    return raw / total if total > 0 else np.zeros(model.feature_count)


# -- serialization -------------------------------------------------------

def _encode(obj):
    if isinstance(obj, Tree):
        return {"__tree__": obj.to_dict()}
    if isinstance(obj, np.ndarray):
        return {"__ndarray__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _decode(obj):
    if isinstance(obj, dict):
        if "__tree__" in obj:
            return Tree.from_dict(obj["__tree__"])
        if "__ndarray__" in obj:
            return np.asarray(obj["__ndarray__"], dtype=obj["dtype"])
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format": FORMAT,
        **model.spec.to_dict(),
        "feature_count": model.feature_count,
        "feature_names": list(model.feature_names) if model.feature_names else None,
        "state": _encode(model.state),
    }


def model_from_dict(d: Mapping) -> TrainedModel:
    if d.get("format") != FORMAT:
        raise FormatError(f"not a serialized model (format={d.get('format')!r})")
    names = d.get("feature_names")
    return TrainedModel(ModelSpec.from_dict(d), int(d["feature_count"]), _decode(d["state"]),
                        tuple(names) if names else None)


def dumps(model: TrainedModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True)


def loads(text: str) -> TrainedModel:
    return model_from_dict(json.loads(text))


def save_model(model: TrainedModel, path: str | Path) -> None:
    Path(path).write_text(dumps(model) + "\n")


def load_model(path: str | Path) -> TrainedModel:
    try:
        return loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from None


__all__ = [
    "ALGORITHMS", "DEFAULTS", "ModelSpec", "TrainedModel", "fit", "predict_scores",
    "predict_labels", "feature_importances", "dumps", "loads", "save_model", "load_model",
]
