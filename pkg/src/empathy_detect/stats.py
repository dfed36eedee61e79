"""Classification metrics, paired/unpaired significance tests and the special
functions behind their tail probabilities."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000


def regularized_incomplete_gamma(s: float, x: float) -> float:
    """Lower regularized incomplete gamma P(s, x)."""
    return _gamma_pq(s, x)[0]


def regularized_upper_gamma(s: float, x: float) -> float:
    """Upper regularized incomplete gamma Q(s, x) = 1 - P(s, x), without cancellation."""
    return _gamma_pq(s, x)[1]


def _gamma_pq(s, x):
    if not (s > 0) or not (x >= 0) or math.isinf(s):
        raise ValidationError(f"incomplete gamma needs s > 0, x >= 0 (got s={s}, x={x})")
    if x == 0:
        return 0.0, 1.0
    if math.isinf(x):
        return 1.0, 0.0
    log_prefix = s * math.log(x) - x - math.lgamma(s)
    if x < s + 1:
        # power series
        term = total = 1.0 / s
        a = s
        for _ in range(_MAX_ITER):
            a += 1
            term *= x / a
            total += term
            if abs(term) < abs(total) * _EPS:
                break
        p = min(1.0, total * math.exp(log_prefix))
        return p, 1.0 - p
    # continued fraction for Q (modified Lentz)
    b = x + 1 - s
    c = 1 / _TINY
    d = 1 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - s)
        b += 2
        d = an * d + b
        d = _TINY if abs(d) < _TINY else d
        c = b + an / c
        c = _TINY if abs(c) < _TINY else c
        d = 1 / d
        delta = d * c
        h *= delta
        if abs(delta - 1) < _EPS:
            break
    q = min(1.0, math.exp(log_prefix) * h)
    return 1.0 - q, q


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) via its continued fraction."""
    if not (a > 0 and b > 0) or not (0 <= x <= 1):
        raise ValidationError(f"incomplete beta needs a, b > 0 and 0 <= x <= 1 (got {a}, {b}, {x})")
    if x == 0:
        return 0.0
    if x == 1:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1) / (a + b + 2):
        return min(1.0, math.exp(log_front) * _beta_cf(a, b, x) / a)
    return max(0.0, 1.0 - math.exp(log_front) * _beta_cf(b, a, 1 - x) / b)


def _beta_cf(a, b, x):
    qab, qap, qam = a + b, a + 1, a - 1
    c = 1.0
    d = 1 - qab * x / qap
    d = _TINY if abs(d) < _TINY else d
    d = 1 / d
    h = d
    for m in range(1, _MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1 / d
        delta = d * c
        h *= delta
        if abs(delta - 1) < _EPS:
            break
    return h


def chi2_sf(x: float, dof: float) -> float:
    if x <= 0:
        return 1.0
    return regularized_upper_gamma(dof / 2.0, x / 2.0)


def t_sf(t: float, dof: float) -> float:
    """Upper tail P(T > t) of Student's t."""
    if not dof > 0:
        raise ValidationError(f"t distribution needs dof > 0, got {dof}")
    tail = 0.5 * regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t))
    return tail if t >= 0 else 1.0 - tail


@dataclass(frozen=True)
class TestResult:
    __test__ = False  # not a pytest class

    statistic: float
    p_value: float
    dof: float
    test_name: str
    detail: dict | None = None

    def to_dict(self):
        return asdict(self)


def mcnemar_test(correct_a, correct_b) -> TestResult:
    """Continuity-corrected McNemar test on paired per-sample correctness."""
    a = np.asarray(correct_a, dtype=bool)
    b_ = np.asarray(correct_b, dtype=bool)
    if a.shape != b_.shape or a.ndim != 1:
        raise ValidationError("mcnemar_test needs two equal-length 1-D correctness vectors")
    b = int(np.sum(a & ~b_))
    c = int(np.sum(~a & b_))
    return mcnemar_from_counts(b, c)


def mcnemar_from_counts(b: int, c: int) -> TestResult:
    if b + c == 0:
        stat, p = 0.0, 1.0
    else:
        stat = max(abs(b - c) - 1, 0) ** 2 / (b + c)
        p = chi2_sf(stat, 1.0)
    return TestResult(float(stat), float(min(max(p, 0.0), 1.0)), 1.0, "mcnemar",
                      {"b": b, "c": c})


def welch_t_test(sample_a, sample_b) -> TestResult:
    """Two-sided Welch t-test (unequal variances, Welch-Satterthwaite dof)."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValidationError("welch_t_test needs at least 2 observations per sample")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0 or vb == 0:
        raise ValidationError("welch_t_test needs nonzero variance in both samples")
    na, nb = a.size, b.size
    se2a, se2b = va / na, vb / nb
    t = (a.mean() - b.mean()) / math.sqrt(se2a + se2b)
    dof = (se2a + se2b) ** 2 / (se2a ** 2 / (na - 1) + se2b ** 2 / (nb - 1))
    p = 2.0 * t_sf(abs(t), dof)
    return TestResult(float(t), float(min(max(p, 0.0), 1.0)), float(dof), "welch_t")


@dataclass(frozen=True)
class MetricReport:
    accuracy: float
    auc_roc: float | None
    auc_pr: float | None
    precision_macro: float
    recall_macro: float
    tp: int
    fp: int
    tn: int
    fn: int

    def to_dict(self):
        return asdict(self)


def confusion_counts(y_true, y_pred) -> tuple[int, int, int, int]:
    t = np.asarray(y_true).astype(bool)
    p = np.asarray(y_pred).astype(bool)
    return (int(np.sum(t & p)), int(np.sum(~t & p)), int(np.sum(~t & ~p)), int(np.sum(t & ~p)))


def _ratio(num, den):
    return num / den if den else 0.0


def roc_auc(y_true, scores) -> float:
    """Probability a random positive outranks a random negative (ties count half)."""
    y = np.asarray(y_true).astype(bool)
    s = np.asarray(scores, dtype=float)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("roc_auc needs both classes")
    ranks = _midranks(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _midranks(s):
    order = np.argsort(s, kind="mergesort")
    sorted_s = s[order]
    ranks = np.empty(len(s))
    starts = np.flatnonzero(np.r_[True, sorted_s[1:] != sorted_s[:-1]])
    ends = np.r_[starts[1:], len(s)]
    for lo, hi in zip(starts, ends):
        ranks[order[lo:hi]] = (lo + hi + 1) / 2.0  # mean of 1-based ranks lo+1..hi
    return ranks


def pr_auc(y_true, scores) -> float:
    """Step-wise area under the precision-recall curve (average precision)."""
    y = np.asarray(y_true).astype(bool)
    s = np.asarray(scores, dtype=float)
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise ValidationError("pr_auc needs both classes")
    order = np.argsort(-s, kind="mergesort")
    s_sorted, y_sorted = s[order], y[order]
    # one operating point per distinct score threshold
    last = np.r_[np.flatnonzero(s_sorted[1:] != s_sorted[:-1]), len(s) - 1]
    tp = np.cumsum(y_sorted)[last]
    predicted = last + 1
    precision = tp / predicted
    recall = tp / n_pos
    prev_recall = np.r_[0.0, recall[:-1]]
    return float(np.sum((recall - prev_recall) * precision))


def classification_metrics(y_true, y_pred, scores=None) -> MetricReport:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.size == 0:
        raise ValidationError("y_true and y_pred must be equal-length, non-empty")
    tp, fp, tn, fn = confusion_counts(y_true, y_pred)
    precision = (_ratio(tp, tp + fp) + _ratio(tn, tn + fn)) / 2.0
    recall = (_ratio(tp, tp + fn) + _ratio(tn, tn + fp)) / 2.0
    auc_roc = auc_pr = None
    if scores is not None:
        scores = np.asarray(scores, dtype=float)
        if scores.shape != y_true.shape:
            raise ValidationError("scores must align with y_true")
        if 0 < tp + fn < len(y_true):
            auc_roc = roc_auc(y_true, scores)
            auc_pr = pr_auc(y_true, scores)
    return MetricReport((tp + tn) / len(y_true), auc_roc, auc_pr, precision, recall,
                        tp, fp, tn, fn)
