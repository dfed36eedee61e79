import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from empathy_detect.errors import UnusableSessionError, ValidationError
from empathy_detect.features import (
    STATISTICS,
    build_summary_table,
    featurize_session,
    lag_frames,
    read_sequence,
    read_summary_table,
    resample_sequence,
    split_summary_name,
    summarize_series,
    write_sequence,
    write_summary_table,
)
from empathy_detect.ingest import FeatureCatalog, openface_feature_names

from conftest import make_session


def brute_summary(x, lag):
    """Loop-based reference: mean, median, sample stddev, lag autocorrelation."""
    n = len(x)
    m = sum(x) / n
    s = sorted(x)
    med = s[n // 2] if n % 2 else (s[n // 2 - 1] + s[n // 2]) / 2
    ss = sum((v - m) ** 2 for v in x)
    sd = math.sqrt(ss / (n - 1)) if n > 1 else 0.0
    if n <= lag or ss == 0:
        ac = 0.0
    else:
        ac = sum((x[t] - m) * (x[t + lag] - m) for t in range(n - lag)) / ss
    return m, med, sd, ac


@pytest.mark.parametrize("fps, lag", [(30, 30), (29.97, 30), (30.5, 31), (0.4, 1), (1.49, 1)])
def test_lag_rounding(fps, lag):
    assert lag_frames(fps) == lag


def test_summary_small_example():
    m, med, sd, ac = summarize_series([1, 2, 3, 4, 5], fps=1)
    assert (m, med) == (3.0, 3.0)
    assert sd == pytest.approx(math.sqrt(2.5), abs=1e-12)
    assert ac == pytest.approx(0.4, abs=1e-12)  # (-2*-1 + -1*0 + 0*1 + 1*2) / 10


def test_summary_constant_series():
    assert summarize_series([0.7] * 50, fps=30) == (0.7, 0.7, 0.0, 0.0)


def test_summary_shorter_than_lag():
    m, med, sd, ac = summarize_series([1.0, 3.0, 2.0], fps=30)
    assert ac == 0.0 and sd == 1.0 and med == 2.0


def test_summary_rejects_empty_and_nan():
    with pytest.raises(ValidationError):
        summarize_series([], fps=30)
    with pytest.raises(ValidationError):
        summarize_series([1.0, float("nan")], fps=30)


@settings(max_examples=60)
@given(arrays(np.float64, st.integers(1, 80), elements=st.floats(-1e3, 1e3)),
       st.sampled_from([1.0, 2.0, 5.0, 30.0]))
def test_summary_matches_bruteforce(x, fps):
    got = summarize_series(x, fps)
    want = brute_summary(list(x), lag_frames(fps))
    np.testing.assert_allclose(got[:3], want[:3], rtol=1e-9, atol=1e-9)
    assert -1.0 <= got[3] <= 1.0
    # autocorrelation of a series that is constant up to round-off is itself round-off
    if np.ptp(x) > 1e-6 * max(1.0, np.abs(x).max()):
        assert got[3] == pytest.approx(want[3], abs=1e-8)


@settings(max_examples=60)
@given(arrays(np.float64, st.integers(3, 60), elements=st.floats(-100, 100)),
       st.floats(-50, 50), st.floats(0.1, 20))
def test_summary_affine_behaviour(x, shift, scale):
    if np.ptp(x) < 1e-3:
        return
    m, med, sd, ac = summarize_series(x, 2.0)
    m2, med2, sd2, ac2 = summarize_series(x * scale + shift, 2.0)
    assert m2 == pytest.approx(m * scale + shift, abs=1e-6)
    assert med2 == pytest.approx(med * scale + shift, abs=1e-6)
    assert sd2 == pytest.approx(sd * scale, rel=1e-7)
    assert ac2 == pytest.approx(ac, abs=1e-7)


def legal_values(names, rows, seed):
    rng = np.random.default_rng(seed)
    values = rng.uniform(0, 1, (rows, len(names)))
    for j, n in enumerate(names):
        if n.startswith("AU") and n.endswith("_c"):
            values[:, j] = np.round(values[:, j])
    return values


def test_featurize_709_gives_2836():
    names = openface_feature_names()
    values = legal_values(names, 40, 0)
    sample = featurize_session(make_session(values, names=names))
    assert sample.vector.shape == (2836,)
    assert len(sample.names) == 2836
    assert sample.names[:4] == tuple(f"gaze_0_x__{s}" for s in STATISTICS)


def test_featurize_uses_only_successful_frames():
    x = np.array([1.0, 4.5, 2.0, 3.0, 4.5])
    s = make_session(x, success=[1, 0, 1, 1, 0], names=["AU01_r"])
    s_ok = make_session(x[[0, 2, 3]], names=["AU01_r"])
    np.testing.assert_array_equal(featurize_session(s).vector[:3],
                                  featurize_session(s_ok).vector[:3])


def test_featurize_no_successful_frames():
    s = make_session(np.zeros(4), success=[0, 0, 0, 0], names=["AU01_r"])
    with pytest.raises(UnusableSessionError):
        featurize_session(s)


def test_split_summary_name():
    assert split_summary_name("AU14_r__autocorr_1s") == ("AU14_r", "autocorr_1s")
    with pytest.raises(ValidationError):
        split_summary_name("AU14_r__max")


def test_resample_180_seconds():
    n = 180 * 30
    s = make_session(np.full(n, 2.5), names=["AU14_r"])
    seq = resample_sequence(s)
    assert seq.matrix.shape == (180, 1)
    assert np.all(seq.matrix == 2.5)
    np.testing.assert_array_equal(seq.grid, np.arange(180))


def test_resample_ramp_matches_bruteforce():
    ts = np.arange(0, 10, 0.1)[:100]
    x = ts * 0.4 + 1.0
    seq = resample_sequence(make_session(x, timestamps=ts, names=["AU14_r"]))
    for sec in range(10):
        members = [v for t, v in zip(ts, x) if sec <= t < sec + 1]
        assert seq.matrix[sec, 0] == pytest.approx(sum(members) / len(members), abs=1e-12)


def test_resample_gaps_forward_and_back_fill():
    ts = np.array([0.5, 2.2, 2.7, 5.1])
    x = np.array([4.9, 1.0, 3.0, 4.0])
    seq = resample_sequence(make_session(x, timestamps=ts, success=[0, 1, 1, 1], names=["AU14_r"]))
    # bin 0 and 1 have no successful frame: back filled from bin 2
    np.testing.assert_allclose(seq.column("AU14_r"), [2.0, 2.0, 2.0, 2.0, 2.0, 4.0])


def test_summary_table_and_sequence_roundtrip(tmp_path, small_synth):
    table = build_summary_table(small_synth.dataset, small_synth.labels)
    assert table.X.shape == (30, 4 * len(small_synth.dataset.catalog.names))
    write_summary_table(table, tmp_path / "t.csv")
    back = read_summary_table(tmp_path / "t.csv")
    assert back.keys == table.keys and back.names == table.names
    np.testing.assert_array_equal(back.X, table.X)
    np.testing.assert_array_equal(back.y, table.y)

    seq = resample_sequence(small_synth.dataset.sessions[0])
    write_sequence(seq, tmp_path / "s.csv")
    seq2 = read_sequence(tmp_path / "s.csv", *seq.key)
    assert seq2.names == seq.names and seq2.start == seq.start
    np.testing.assert_array_equal(seq2.matrix, seq.matrix)


def test_subset_catalog():
    names = openface_feature_names()
    values = legal_values(names, 10, 1)
    s = make_session(values, names=names)
    sub = FeatureCatalog(("AU14_r", "pose_Rx"))
    v = featurize_session(s, sub).vector
    assert v[0] == pytest.approx(values[:, names.index("AU14_r")].mean(), abs=1e-12)
    assert v[4] == pytest.approx(values[:, names.index("pose_Rx")].mean(), abs=1e-12)
