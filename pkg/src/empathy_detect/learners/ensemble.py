"""Bootstrap ensembles (bagging, random forest), SAMME AdaBoost and logistic
gradient boosting, all built on :mod:`.tree`."""

from __future__ import annotations

import math

import numpy as np

from .linear import sigmoid
from .tree import Tree, grow_gini_tree, grow_newton_tree


def member_rngs(seed: int, count: int) -> list[np.random.Generator]:
    """Independent per-member generators derived from one seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def bootstrap_indices(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, n, size=n)


def resolve_max_features(max_features, n_features: int) -> int | None:
    if max_features in (None, "all"):
        return None
    if max_features == "sqrt":
        return max(1, math.ceil(math.sqrt(n_features)))
    k = int(max_features)
    if not 1 <= k:
        raise ValueError("max_features must be >= 1")
    return min(k, n_features)


def fit_bagged_trees(X, y, seed, n_estimators, max_depth=None, min_samples_leaf=1,
                     max_features=None) -> list[Tree]:
    n, n_feat = X.shape
    mf = resolve_max_features(max_features, n_feat)
    trees = []
    for rng in member_rngs(seed, n_estimators):
        idx = bootstrap_indices(rng, n)
        trees.append(grow_gini_tree(X[idx], y[idx], max_depth=max_depth,
                                    min_samples_leaf=min_samples_leaf,
                                    max_features=mf, rng=rng))
    return trees


def vote_fraction(trees, X) -> np.ndarray:
    votes = np.zeros(len(X))
    for tree in trees:
        votes += tree.predict(X) > 0.5
    return votes / len(trees)


def fit_adaboost(X, y, n_estimators=100, learning_rate=1.0):
    """Binary SAMME with depth-1 trees.

    Stops early when a stump has zero weighted error (kept with weight 1) or
    when no stump beats chance.
    """
    n = len(y)
    w = np.full(n, 1.0 / n)
    stumps, alphas, errors = [], [], []
    for _ in range(n_estimators):
        stump = grow_gini_tree(X, y, sample_weight=w, max_depth=1)
        miss = (stump.predict(X) > 0.5) != (y > 0.5)
        err = float(w[miss].sum() / w.sum())
        if err <= 0.0:
            stumps.append(stump)
            alphas.append(1.0)
            errors.append(err)
            break
        if err >= 0.5:
            if not stumps:
                stumps.append(stump)
                alphas.append(1.0)
                errors.append(err)
            break
        alpha = learning_rate * math.log((1.0 - err) / err)
        stumps.append(stump)
        alphas.append(alpha)
        errors.append(err)
        w = w * np.exp(alpha * miss)
        w /= w.sum()
    return stumps, np.array(alphas), np.array(errors)


def adaboost_scores(stumps, alphas, X) -> np.ndarray:
    total = np.zeros(len(X))
    for stump, a in zip(stumps, alphas):
        total += a * (stump.predict(X) > 0.5)
    return total / alphas.sum()


def logistic_loss(y, margin) -> float:
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


def fit_gradient_boosting(X, y, seed, n_estimators=100, learning_rate=0.12, max_depth=6,
                          reg_lambda=1.0, min_child_weight=1.0, gamma=0.0, subsample=1.0):
    """Logistic-loss boosting with Newton leaf weights scaled by the learning rate.

    Returns the shrunk trees and the per-round training loss (index 0 is the
    loss of the constant zero-margin start).
    """
    n = len(y)
    rng = np.random.default_rng(seed)
    margin = np.zeros(n)
    losses = [logistic_loss(y, margin)]
    trees = []
    n_sub = max(1, int(round(subsample * n)))
    for _ in range(n_estimators):
        p = sigmoid(margin)
        grad = p - y
        hess = p * (1.0 - p)
        rows = None if n_sub >= n else np.sort(rng.choice(n, size=n_sub, replace=False))
        tree = grow_newton_tree(X, grad, hess, max_depth=max_depth, reg_lambda=reg_lambda,
                                min_child_weight=min_child_weight, gamma=gamma, rows=rows)
        tree.value *= learning_rate
        trees.append(tree)
        margin += tree.predict(X)
        losses.append(logistic_loss(y, margin))
    return trees, np.array(losses)


def boosting_margin(trees, X) -> np.ndarray:
    margin = np.zeros(len(X))
    for tree in trees:
        margin += tree.predict(X)
    return margin
