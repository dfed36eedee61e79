import numpy as np
import pytest

from empathy_detect.errors import ComparisonError, StratificationError, ValidationError
from empathy_detect.features import SummaryTable
from empathy_detect.harness import (
    CVConfig,
    CVReport,
    anova_f,
    compare_models,
    fit_fold,
    fold_artifacts,
    fold_partitions,
    grid_search,
    run_cv,
    select_top_k_features,
    standardize_apply,
    standardize_fit,
    stratified_folds,
)
from empathy_detect.learners import ModelSpec

GBT = ModelSpec("gradient_boosted_trees", {"n_estimators": 15, "max_depth": 3})


def make_table(n=40, d=12, signal=0.0, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.standard_normal((n, d))
    X[:, 3] += signal * y
    keys = [(f"P{i:03d}", "S1") for i in range(n)]
    names = [f"gaze_angle_x__s{j}" for j in range(d)]
    return SummaryTable(keys, names, X, y)


def test_scaler_example():
    X = np.array([[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]])
    sc = standardize_fit(X)
    np.testing.assert_array_equal(sc.mean, [3.0, 5.0])
    np.testing.assert_array_equal(sc.scale, [2.0, 0.0])
    np.testing.assert_array_equal(standardize_apply(sc, X), [[-1, 0], [0, 0], [1, 0]])
    np.testing.assert_array_equal(standardize_apply(sc, [[7.0, 9.0]]), [[2.0, 0.0]])


def anova_bruteforce(col, y):
    groups = {}
    for v, c in zip(col, y):
        groups.setdefault(c, []).append(v)
    grand = sum(col) / len(col)
    ssb = sum(len(g) * (sum(g) / len(g) - grand) ** 2 for g in groups.values())
    ssw = sum(sum((v - sum(g) / len(g)) ** 2 for v in g) for g in groups.values())
    k, n = len(groups), len(col)
    return (ssb / (k - 1)) / (ssw / (n - k))


def test_anova_f_fixture():
    X = np.array([[1.0, 2.0, 0.3], [2.0, 2.5, 0.1], [3.0, 1.0, 0.4],
                  [6.0, 2.2, 0.2], [7.0, 1.9, 0.9], [8.0, 2.4, 0.5]])
    y = np.array([0, 0, 0, 1, 1, 1])
    f = anova_f(X, y)
    for j in range(3):
        assert f[j] == pytest.approx(anova_bruteforce(list(X[:, j]), list(y)), abs=1e-10)
    assert f[0] == pytest.approx(37.5, abs=1e-12)  # ssb 37.5, ssw 4


def test_anova_degenerate_columns_and_selection_order():
    X = np.array([[0.0, 1.0, 5.0, 0.1], [0.0, 1.0, 5.0, 0.2],
                  [0.0, 2.0, 5.0, 0.3], [0.0, 2.0, 5.0, 0.1]])
    y = np.array([0, 0, 1, 1])
    f = anova_f(X, y)
    assert np.isnan(f[0]) and np.isinf(f[1]) and np.isnan(f[2])
    np.testing.assert_array_equal(select_top_k_features(X, y, 2), [1, 3])
    np.testing.assert_array_equal(select_top_k_features(X, y, 4), [0, 1, 2, 3])


def test_stratified_folds_balanced_and_reproducible():
    y = np.array([0] * 13 + [1] * 11)
    a = stratified_folds(y, 5, seed=4, repeat=2)
    np.testing.assert_array_equal(a, stratified_folds(y, 5, seed=4, repeat=2))
    assert not np.array_equal(a, stratified_folds(y, 5, seed=4, repeat=3))
    for c in (0, 1):
        counts = np.bincount(a[y == c], minlength=5)
        assert counts.max() - counts.min() <= 1
    with pytest.raises(StratificationError):
        stratified_folds(np.array([0] * 10 + [1] * 3), 5, 0)


def test_run_cv_structure_and_membership():
    table = make_table(signal=5.0)
    report = run_cv(table, CVConfig(GBT, folds=5, repeats=10, k_best=4, seed=1))
    assert len(report.folds) == 50
    for r in range(10):
        idx = sorted(i for f in report.folds if f.repeat == r for i in f.test_index)
        assert idx == list(range(40))
    assert all(len(f.selected) == 4 for f in report.folds)
    assert report.aggregate["accuracy"] > 0.85  # the two classes overlap a little
    assert report.correctness().shape == (10, 40)


def test_chance_baseline_is_exactly_half():
    table = make_table(n=62)
    report = run_cv(table, CVConfig(ModelSpec("chance_baseline"), 5, 10, 3, 0))
    assert report.aggregate["accuracy"] == 0.5


def test_no_leakage_from_test_rows():
    table = make_table(signal=1.0)
    cfg = CVConfig(GBT, folds=5, repeats=2, k_best=5, seed=3)
    r, f, test = fold_partitions(table.y, cfg)[3]
    before = fold_artifacts(table, cfg, r, f).serialize()
    X = table.X.copy()
    X[test] = np.random.default_rng(9).normal(100, 50, X[test].shape)
    mutated = SummaryTable(table.keys, table.names, X, table.y)
    assert fold_artifacts(mutated, cfg, r, f).serialize() == before
    # and the digest recorded by run_cv is that same fit
    report = run_cv(table, cfg)
    assert report.folds[3].artifact_digest == fold_artifacts(table, cfg, r, f).digest()


def test_fit_fold_only_sees_given_rows():
    table = make_table()
    a = fit_fold(table.X[:30], table.y[:30], 5, GBT)
    b = fit_fold(table.X[:30].copy(), table.y[:30].copy(), 5, GBT)
    assert a.digest() == b.digest()


def test_jobs_do_not_change_report():
    table = make_table(signal=1.0)
    cfg = CVConfig(GBT, folds=4, repeats=2, k_best=5, seed=5)
    assert run_cv(table, cfg, jobs=1).dumps() == run_cv(table, cfg, jobs=2).dumps()


def test_label_shuffle_is_near_chance():
    # one shuffle has a spread of about 0.05, so average several independent shuffles
    accs = []
    for s in range(8):
        rng = np.random.default_rng(100 + s)
        table = make_table(n=120, d=20, seed=100 + s)
        shuffled = SummaryTable(table.keys, table.names, table.X, rng.permutation(table.y))
        report = run_cv(shuffled, CVConfig(ModelSpec("logistic_regression"), 5, 4, 10, s))
        accs.append(report.aggregate["accuracy"])
    assert 0.45 <= np.mean(accs) <= 0.55


def test_report_roundtrip(tmp_path):
    table = make_table(signal=2.0)
    report = run_cv(table, CVConfig(GBT, 5, 2, 4, 0))
    records, summary = report.save(tmp_path)
    back = CVReport.load(records)
    assert back.dumps() == report.dumps()
    assert summary.read_text().startswith("model,folds,repeats,k_best")


def test_compare_models():
    table = make_table(signal=4.0)
    cfg = CVConfig(GBT, 5, 3, 4, 0)
    strong = run_cv(table, cfg)
    base = run_cv(table, CVConfig(ModelSpec("chance_baseline"), 5, 3, 4, 0))
    same = compare_models(strong, strong)
    assert same.p_value == 1.0 and same.statistic == 0.0
    res = compare_models(strong, base)
    assert res.p_value < 0.01 and res.detail["pairs"] == 40 * 3
    with pytest.raises(ComparisonError):
        compare_models(strong, run_cv(table, CVConfig(GBT, 5, 3, 4, 1)))


def test_grid_search_orders_by_accuracy():
    table = make_table(signal=3.0)
    grid = [ModelSpec("chance_baseline"), GBT, ModelSpec("logistic_regression")]
    ranked = grid_search(table, grid, CVConfig(GBT, 5, 1, 4, 0))
    accs = [r.aggregate["accuracy"] for _, r in ranked]
    assert accs == sorted(accs, reverse=True)
    assert ranked[-1][0].algorithm == "chance_baseline"


def test_run_cv_validation():
    table = make_table()
    with pytest.raises(ValidationError):
        run_cv(table, CVConfig(GBT, 5, 1, 99, 0))
    with pytest.raises(ValidationError):
        run_cv(SummaryTable(table.keys, table.names, table.X), CVConfig(GBT, 5, 1, 3, 0))
