import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from empathy_detect.errors import (
    DegenerateLabelsError,
    FormatError,
    UnsupportedOperationError,
    ValidationError,
)
from empathy_detect.learners import (
    ALGORITHMS,
    ModelSpec,
    dumps,
    feature_importances,
    fit,
    loads,
    predict_labels,
    predict_scores,
)
from empathy_detect.learners.ensemble import (
    bootstrap_indices,
    fit_adaboost,
    fit_gradient_boosting,
    member_rngs,
)
from empathy_detect.learners.linear import logistic_gradient, logistic_objective
from empathy_detect.learners.tree import LEAF, grow_gini_tree

FAST = {
    "logistic_regression": {},
    "linear_svm": {"epochs": 30},
    "decision_tree": {"max_depth": 4},
    "bagging": {"n_estimators": 10, "max_depth": 4},
    "random_forest": {"n_estimators": 10, "max_depth": 4},
    "adaboost": {"n_estimators": 20},
    "gradient_boosted_trees": {"n_estimators": 20},
    "chance_baseline": {},
}


def blobs(n=80, d=5, shift=2.0, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.standard_normal((n, d))
    X[:, 0] += shift * y
    return X, y


@pytest.mark.parametrize("algo", [a for a in ALGORITHMS if a != "chance_baseline"])
def test_each_learner_separates_blobs(algo):
    X, y = blobs(shift=4.0)
    model = fit(ModelSpec(algo, FAST[algo], seed=3), X, y)
    Xt, yt = blobs(shift=4.0, seed=1)
    assert np.mean(predict_labels(model, Xt) == yt) >= 0.9


@pytest.mark.parametrize("algo", ALGORITHMS)
def test_deterministic_and_serializable(algo):
    X, y = blobs()
    a = fit(ModelSpec(algo, FAST[algo], seed=7), X, y)
    b = fit(ModelSpec(algo, FAST[algo], seed=7), X, y)
    assert dumps(a) == dumps(b)
    back = loads(dumps(a))
    np.testing.assert_array_equal(predict_scores(back, X), predict_scores(a, X))
    assert dumps(back) == dumps(a)


def test_reference_gbt_config_accepted():
    spec = ModelSpec("gradient_boosted_trees",
                     {"learning_rate": 0.12, "max_depth": 6, "sampling": "uniform"})
    assert spec.params["learning_rate"] == 0.12 and spec.params["max_depth"] == 6


@pytest.mark.parametrize("algo, params", [("gradient_boosted_trees", {"sampling": "gradient"}),
                                          ("logistic_regression", {"depth": 3}),
                                          ("nearest_neighbour", {})])
def test_bad_specs(algo, params):
    with pytest.raises(ValidationError):
        ModelSpec(algo, params)


def test_single_class_training():
    X = np.zeros((4, 2))
    with pytest.raises(DegenerateLabelsError):
        fit(ModelSpec("decision_tree"), X, np.ones(4))
    assert np.all(predict_labels(fit(ModelSpec("chance_baseline"), X, np.ones(4)), X) == 1)


def test_feature_count_mismatch():
    X, y = blobs()
    model = fit(ModelSpec("logistic_regression"), X, y)
    with pytest.raises(ValidationError):
        predict_scores(model, X[:, :3])


def test_chance_baseline_predicts_empathic():
    X, y = blobs(n=10)
    model = fit(ModelSpec("chance_baseline"), X, y)
    assert np.all(predict_labels(model, X) == 1)
    with pytest.raises(UnsupportedOperationError):
        feature_importances(model)


def test_strict_threshold():
    # a stump whose positive leaf holds exactly half positives must predict 0
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    y = np.array([1, 0, 1, 1])
    model = fit(ModelSpec("decision_tree", {"max_depth": 1}), X, y)
    np.testing.assert_allclose(predict_scores(model, X), [0.5, 0.5, 1.0, 1.0])
    np.testing.assert_array_equal(predict_labels(model, X), [0, 0, 1, 1])


def test_logistic_xor_is_flat():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    y = np.array([0, 0, 1, 1])
    model = fit(ModelSpec("logistic_regression", {"l2": 1e-3}), X, y)
    np.testing.assert_allclose(predict_scores(model, X), 0.5, atol=1e-5)
    # brute force: the symmetric optimum has zero weights and zero intercept
    grid = np.linspace(-2, 2, 41)
    best = min((logistic_objective(np.array([a, b, c]), X, y, 1e-3), (a, b, c))
               for a in grid for b in grid for c in grid)
    assert np.allclose(best[1], 0.0)


def test_logistic_gradient_finite_differences():
    rng = np.random.default_rng(0)
    X, y = blobs(n=30, d=4)
    worst = 0.0
    for _ in range(20):
        theta = rng.normal(0, 1, 5)
        g = logistic_gradient(theta, X, y, 0.7)
        h = 1e-6
        fd = np.array([(logistic_objective(theta + h * e, X, y, 0.7)
                        - logistic_objective(theta - h * e, X, y, 0.7)) / (2 * h)
                       for e in np.eye(5)])
        worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    assert worst < 1e-5


def gini_stump_oracle(X, y):
    """Exhaustive single split minimizing weighted child Gini impurity."""
    def gini(lab):
        if len(lab) == 0:
            return 0.0
        p = np.mean(lab)
        return 2 * p * (1 - p)
    best = None
    for j in range(X.shape[1]):
        vals = np.unique(X[:, j])
        for lo, hi in zip(vals[:-1], vals[1:]):
            t = (lo + hi) / 2
            left = X[:, j] <= t
            imp = left.sum() * gini(y[left]) + (~left).sum() * gini(y[~left])
            if best is None or imp < best[0] - 1e-12:
                best = (imp, j, t)
    return best


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_gini_stump_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(0, 1, (12, 3)), 1)
    y = (rng.random(12) < 0.5).astype(float)
    if y.min() == y.max():
        return
    tree = grow_gini_tree(X, y, max_depth=1)
    oracle = gini_stump_oracle(X, y)
    if tree.feature[0] == LEAF:
        assert oracle is None or oracle[0] >= len(y) * 2 * y.mean() * (1 - y.mean()) - 1e-12
        return
    left = X[:, tree.feature[0]] <= tree.threshold[0]
    imp = sum(m.sum() * 2 * y[m].mean() * (1 - y[m].mean()) for m in (left, ~left))
    assert imp == pytest.approx(oracle[0], abs=1e-12)


def newton_stump_oracle(X, y, lam, lr):
    """One boosting round from margin 0 with one split, searched exhaustively."""
    g = 0.5 - y
    h = np.full(len(y), 0.25)
    score = lambda G, H: G * G / (H + lam)
    best = None
    for j in range(X.shape[1]):
        vals = np.unique(X[:, j])
        for lo, hi in zip(vals[:-1], vals[1:]):
            left = X[:, j] <= lo
            if h[left].sum() < 1 or h[~left].sum() < 1:
                continue
            gain = 0.5 * (score(g[left].sum(), h[left].sum()) + score(g[~left].sum(), h[~left].sum())
                          - score(g.sum(), h.sum()))
            if best is None or gain > best[0]:
                best = (gain, left)
    margin = np.zeros(len(y))
    left = best[1]
    margin[left] = -lr * g[left].sum() / (h[left].sum() + lam)
    margin[~left] = -lr * g[~left].sum() / (h[~left].sum() + lam)
    return margin


def test_gbt_first_round_matches_independent_walker():
    X = np.array([[0.1, 5.0], [0.4, 3.0], [0.35, 1.0], [0.8, 2.0],
                  [0.9, 4.0], [0.05, 6.0], [0.6, 7.0], [0.7, 8.0]])
    y = np.array([0, 0, 0, 1, 1, 0, 1, 1], dtype=float)
    trees, _ = fit_gradient_boosting(X, y, seed=0, n_estimators=1, learning_rate=0.12,
                                     max_depth=1, reg_lambda=1.0, min_child_weight=1.0)
    np.testing.assert_allclose(trees[0].predict(X), newton_stump_oracle(X, y, 1.0, 0.12),
                               atol=1e-9)


def test_boosting_loss_non_increasing():
    X, y = blobs(n=120, d=6, shift=0.8)
    _, losses = fit_gradient_boosting(X, y.astype(float), seed=0, n_estimators=60)
    assert np.all(np.diff(losses) <= 1e-12)


def test_bagging_single_member_equals_tree_on_bootstrap():
    X, y = blobs(n=40)
    model = fit(ModelSpec("bagging", {"n_estimators": 1}, seed=5), X, y)
    rng = member_rngs(5, 1)[0]
    idx = bootstrap_indices(rng, len(y))
    tree = grow_gini_tree(X[idx], y[idx].astype(float), rng=rng)
    assert model.state["trees"][0].to_dict() == tree.to_dict()


def test_adaboost_errors_below_half():
    X, y = blobs(n=100, shift=1.0)
    _, alphas, errors = fit_adaboost(X, y.astype(float), 30)
    assert np.all(errors < 0.5) and np.all(alphas > 0)


@pytest.mark.parametrize("algo", [a for a in ALGORITHMS if a != "chance_baseline"])
def test_importances(algo):
    X, y = blobs(n=100, shift=4.0)
    imp = feature_importances(fit(ModelSpec(algo, FAST[algo], seed=1), X, y))
    assert imp.shape == (5,) and np.all(imp >= 0)
    assert imp.sum() == pytest.approx(1.0)
    assert np.argmax(imp) == 0


def test_single_split_importance_is_one_hot():
    X = np.array([[0.0, 3.0], [1.0, 2.0], [2.0, 1.0], [3.0, 0.5]])
    y = np.array([0, 0, 1, 1])
    imp = feature_importances(fit(ModelSpec("decision_tree", {"max_depth": 1}), X, y))
    np.testing.assert_array_equal(imp, [1.0, 0.0])


def test_corrupt_model_text():
    with pytest.raises(FormatError):
        loads(json.dumps({"format": "something-else"}))
