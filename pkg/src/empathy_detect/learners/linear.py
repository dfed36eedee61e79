"""Linear classifiers: L2 logistic regression and a Pegasos-style linear SVM."""

from __future__ import annotations

import numpy as np


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_objective(theta, X, y, l2):
    """Penalized negative log-likelihood; ``theta = [w..., b]``, intercept unpenalized."""
    w, b = theta[:-1], theta[-1]
    z = X @ w + b
    return float(np.sum(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w))


def logistic_gradient(theta, X, y, l2):
    w, b = theta[:-1], theta[-1]
    r = sigmoid(X @ w + b) - y
    return np.r_[X.T @ r + l2 * w, r.sum()]


def fit_logistic(X, y, l2=1.0, max_iter=1000, tol=1e-6):
    """Gradient descent with Armijo backtracking.

    Stops when the gradient's infinity norm drops below ``tol`` or after
    ``max_iter`` iterations.
    """
    theta = np.zeros(X.shape[1] + 1)
    f = logistic_objective(theta, X, y, l2)
    step = 1.0
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        g = logistic_gradient(theta, X, y, l2)
        if np.max(np.abs(g)) < tol:
            break
        gg = g @ g
        step *= 2.0
        while True:
            cand = theta - step * g
            f_new = logistic_objective(cand, X, y, l2)
            if f_new <= f - 1e-4 * step * gg or step < 1e-20:
                break
            step *= 0.5
        theta, f = cand, f_new
    return {"weights": theta[:-1], "intercept": float(theta[-1]), "n_iter": n_iter}


def fit_linear_svm(X, y, C=1.0, epochs=200, rng=None):
    """Hinge loss + L2 by stochastic subgradient descent (Pegasos step sizes).

    The intercept is learned as the weight of a constant feature.  Returned
    weights are the average of the iterates over the second half of training.
    """
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    s = np.where(y > 0, 1.0, -1.0)
    lam = 1.0 / (C * n)
    w = np.zeros(d + 1)
    avg = np.zeros(d + 1)
    n_avg = 0
    t = 0
    start_avg = (epochs // 2) * n
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            margin = s[i] * (Xa[i] @ w)
            w *= 1.0 - eta * lam
            if margin < 1.0:
                w += eta * s[i] * Xa[i]
            if t > start_avg:
                n_avg += 1
                avg += (w - avg) / n_avg
    return {"weights": avg[:-1], "intercept": float(avg[-1])}
