"""Array-backed binary trees and exact greedy split search.

Two growers share one representation:

* :func:`grow_gini_tree` -- CART classification tree on (weighted) 0/1 labels,
  leaf value = weighted fraction of positives.
* :func:`grow_newton_tree` -- second-order regression tree on gradient/hessian
  pairs for logistic boosting, leaf value = -G / (H + lambda).

A sample goes left when ``x[feature] <= threshold``.  Ties between equally
good splits resolve to the lowest feature index, then the smallest threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF = -1


@dataclass
class Tree:
    feature: np.ndarray    # int, LEAF for leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray       # split gain at internal nodes, 0 at leaves

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_splits(self) -> int:
        return int(np.sum(self.feature != LEAF))

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of X."""
        node = np.zeros(len(X), dtype=np.int64)
        active = self.feature[node] != LEAF
        rows = np.arange(len(X))
        while active.any():
            r = rows[active]
            n = node[r]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active[r] = self.feature[node[r]] != LEAF
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def gain_by_feature(self, n_features: int) -> np.ndarray:
        out = np.zeros(n_features)
        split = self.feature != LEAF
        np.add.at(out, self.feature[split], self.gain[split])
        return out

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in
                ("feature", "threshold", "left", "right", "value", "gain")}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        ints = {"feature", "left", "right"}
        return cls(**{k: np.asarray(d[k], dtype=np.int64 if k in ints else float)
                      for k in ("feature", "threshold", "left", "right", "value", "gain")})


class _Builder:
    def __init__(self):
        self.feature, self.threshold, self.left, self.right = [], [], [], []
        self.value, self.gain = [], []

    def add(self, value: float) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(float(value))
        self.gain.append(0.0)
        return len(self.feature) - 1

    def split(self, node, feature, threshold, gain, left, right):
        self.feature[node] = int(feature)
        self.threshold[node] = float(threshold)
        self.gain[node] = float(gain)
        self.left[node] = left
        self.right[node] = right

    def build(self) -> Tree:
        return Tree(np.array(self.feature, dtype=np.int64), np.array(self.threshold, dtype=float),
                    np.array(self.left, dtype=np.int64), np.array(self.right, dtype=np.int64),
                    np.array(self.value, dtype=float), np.array(self.gain, dtype=float))


def _sorted_columns(X, rows, cand):
    sub = X[np.ix_(rows, cand)]
    order = np.argsort(sub, axis=0, kind="stable")
    return np.take_along_axis(sub, order, axis=0), order


def _thresholds(vals, pos, feat):
    lo = vals[pos, feat]
    hi = vals[pos + 1, feat]
    mid = lo + (hi - lo) / 2.0
    return mid if mid < hi else lo


def _pick(score, valid):
    """Index (feature_col, position) of the best valid score, feature-major tie-break."""
    score = np.where(valid, score, np.inf).T  # (features, positions)
    flat = int(np.argmin(score))
    f, p = divmod(flat, score.shape[1])
    if not np.isfinite(score[f, p]):
        return None
    return f, p


def grow_gini_tree(X, y, sample_weight=None, max_depth=None, min_samples_leaf=1,
                   max_features=None, rng=None) -> Tree:
    """CART with Gini impurity; ``max_features`` candidates are redrawn at every node."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, n_feat = X.shape
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    max_depth = np.inf if max_depth is None else max_depth
    all_feats = np.arange(n_feat)
    b = _Builder()

    def leaf_value(rows):
        tot = w[rows].sum()
        return (w[rows] * y[rows]).sum() / tot if tot > 0 else 0.0

    root = b.add(leaf_value(np.arange(n)))
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, rows, depth = stack.pop()
        m = len(rows)
        yw = w[rows] * y[rows]
        W, P = w[rows].sum(), yw.sum()
        if depth >= max_depth or m < 2 * min_samples_leaf or P <= 0 or P >= W:
            continue
        if max_features is not None and max_features < n_feat:
            cand = np.sort(rng.choice(n_feat, size=max_features, replace=False))
        else:
            cand = all_feats
        vals, order = _sorted_columns(X, rows, cand)
        ws = np.cumsum(w[rows][order], axis=0)[:-1]
        ps = np.cumsum(yw[order], axis=0)[:-1]
        wr, pr = W - ws, P - ps
        with np.errstate(divide="ignore", invalid="ignore"):
            child = (2 * ps * (ws - ps) / ws) + (2 * pr * (wr - pr) / wr)
        count_left = np.arange(1, m)[:, None]
        valid = ((vals[:-1] < vals[1:]) & (count_left >= min_samples_leaf)
                 & (m - count_left >= min_samples_leaf) & (ws > 0) & (wr > 0))
        best = _pick(child, valid)
        if best is None:
            continue
        f, p = best
        parent = 2 * P * (W - P) / W
        thr = _thresholds(vals, p, f)
        feat = cand[f]
        go_left = X[rows, feat] <= thr
        lrows, rrows = rows[go_left], rows[~go_left]
        left = b.add(leaf_value(lrows))
        right = b.add(leaf_value(rrows))
        b.split(node, feat, thr, max(parent - child[p, f], 0.0), left, right)
        stack.append((right, rrows, depth + 1))
        stack.append((left, lrows, depth + 1))
    return b.build()


def grow_newton_tree(X, grad, hess, max_depth=6, reg_lambda=1.0, min_child_weight=1.0,
                     gamma=0.0, rows=None) -> Tree:
    """Second-order boosting tree; leaf values are unshrunk Newton weights."""
    X = np.asarray(X, dtype=float)
    n_feat = X.shape[1]
    rows = np.arange(len(X)) if rows is None else np.asarray(rows)
    all_feats = np.arange(n_feat)
    b = _Builder()

    def weight(G, H):
        return -G / (H + reg_lambda)

    root = b.add(weight(grad[rows].sum(), hess[rows].sum()))
    stack = [(root, rows, 0)]
    while stack:
        node, rows, depth = stack.pop()
        m = len(rows)
        if depth >= max_depth or m < 2:
            continue
        G, H = grad[rows].sum(), hess[rows].sum()
        vals, order = _sorted_columns(X, rows, all_feats)
        gl = np.cumsum(grad[rows][order], axis=0)[:-1]
        hl = np.cumsum(hess[rows][order], axis=0)[:-1]
        gr, hr = G - gl, H - hl
        gain = 0.5 * (gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda)
                      - G * G / (H + reg_lambda)) - gamma
        valid = ((vals[:-1] < vals[1:]) & (hl >= min_child_weight)
                 & (hr >= min_child_weight) & (gain > 0))
        best = _pick(-gain, valid)
        if best is None:
            continue
        f, p = best
        thr = _thresholds(vals, p, f)
        go_left = X[rows, f] <= thr
        lrows, rrows = rows[go_left], rows[~go_left]
        left = b.add(weight(gl[p, f], hl[p, f]))
        right = b.add(weight(gr[p, f], hr[p, f]))
        b.split(node, f, thr, gain[p, f], left, right)
        stack.append((right, rrows, depth + 1))
        stack.append((left, lrows, depth + 1))
    return b.build()
