"""Fixed-length summaries and 1 Hz resampling of per-frame feature series."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import FormatError, UnusableSessionError, ValidationError
from .ingest import Dataset, FeatureCatalog, Session
from .labels import LabelSet

STATISTICS = ("mean", "median", "stddev", "autocorr_1s")
SEP = "__"


def lag_frames(fps: float) -> int:
    """Frames spanning one second, rounded half-up, at least 1."""
    if not fps > 0:
        raise ValidationError(f"fps must be positive, got {fps}")
    return max(1, int(math.floor(fps + 0.5)))


def summarize_series(series, fps: float) -> tuple[float, float, float, float]:
    """(mean, median, sample stddev, lag-1-second autocorrelation) of one series."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValidationError("summarize_series needs a non-empty 1-D series")
    if not np.all(np.isfinite(x)):
        raise ValidationError("series contains non-finite values")
    stats = summarize_matrix(x[:, None], fps)
    return tuple(float(v) for v in stats[:, 0])


def summarize_matrix(values: np.ndarray, fps: float) -> np.ndarray:
    """Column-wise :func:`summarize_series`; returns shape (4, columns)."""
    lag = lag_frames(fps)
    n, f = values.shape
    out = np.zeros((4, f))
    if n == 0:
        raise ValidationError("cannot summarize an empty series")
    const = np.all(values == values[0], axis=0)
    mean = values.mean(axis=0)
    mean[const] = values[0, const]
    out[0] = mean
    out[1] = np.median(values, axis=0)
    if n > 1:
        dev = values - mean
        ss = np.einsum("ij,ij->j", dev, dev)
        std = np.sqrt(ss / (n - 1))
        std[const] = 0.0
        out[2] = std
        if n > lag:
            num = np.einsum("ij,ij->j", dev[:-lag], dev[lag:])
            ok = ~const & (ss > 0)
            out[3, ok] = np.clip(num[ok] / ss[ok], -1.0, 1.0)
    return out


def summary_names(catalog: FeatureCatalog) -> list[str]:
    return [f"{name}{SEP}{stat}" for name in catalog.names for stat in STATISTICS]


def split_summary_name(name: str) -> tuple[str, str]:
    feature, _, stat = name.rpartition(SEP)
    if stat not in STATISTICS or not feature:
        raise ValidationError(f"not a summary feature name: {name!r}")
    return feature, stat


@dataclass(frozen=True)
class SummarySample:
    participant_id: str
    story_id: str
    vector: np.ndarray
    names: tuple[str, ...]
    label: int | None = None

    @property
    def key(self):
        return (self.participant_id, self.story_id)


def featurize_session(session: Session, catalog: FeatureCatalog | None = None,
                      label: int | None = None) -> SummarySample:
    """Summarize every catalog feature over the session's successfully tracked frames.

    The lag uses the session's nominal frame rate, counted on the filtered series.
    """
    catalog = catalog or session.catalog
    values = _successful_values(session, catalog)
    stats = summarize_matrix(values, session.nominal_fps)
    vector = stats.T.reshape(-1).copy()  # feature-major, statistic-minor
    if not np.all(np.isfinite(vector)):
        raise ValidationError(f"session {session.key}: non-finite summary (clean first)")
    return SummarySample(session.participant_id, session.story_id, vector,
                         tuple(summary_names(catalog)), label)


def _successful_values(session: Session, catalog: FeatureCatalog) -> np.ndarray:
    if not session.success.any():
        raise UnusableSessionError(f"session {session.key} has no successfully tracked frames")
    if catalog.names == session.catalog.names:
        cols = slice(None)
    else:
        cols = [session.catalog.index(n) for n in catalog.names]
    return session.values[session.success][:, cols]


@dataclass(frozen=True)
class ResampledSequence:
    participant_id: str
    story_id: str
    start: int
    matrix: np.ndarray
    names: tuple[str, ...]

    @property
    def key(self):
        return (self.participant_id, self.story_id)

    @property
    def grid(self) -> np.ndarray:
        """Left edge, in seconds, of each 1 s bin."""
        return np.arange(self.start, self.start + len(self.matrix))

    def column(self, name: str) -> np.ndarray:
        try:
            return self.matrix[:, self.names.index(name)]
        except ValueError:
            raise ValidationError(f"unknown feature {name!r}") from None


def resample_sequence(session: Session, catalog: FeatureCatalog | None = None) -> ResampledSequence:
    """Average successful frames into 1 s bins ``[t, t+1)``; empty bins carry the previous value."""
    catalog = catalog or session.catalog
    values = _successful_values(session, catalog)
    ts = session.timestamp[session.success]
    start = int(math.floor(session.timestamp[0]))
    n_bins = int(math.floor(session.timestamp[-1])) - start + 1
    bins = np.floor(ts).astype(np.int64) - start
    # timestamps are increasing, so each bin is a contiguous run of frames
    firsts = np.flatnonzero(np.r_[True, bins[1:] != bins[:-1]])
    sums = np.add.reduceat(values, firsts, axis=0)
    counts = np.diff(np.r_[firsts, len(bins)])
    occupied = bins[firsts]
    matrix = np.empty((n_bins, values.shape[1]))
    matrix[occupied] = sums / counts[:, None]
    # forward fill, then back fill any leading gap
    src = np.full(n_bins, -1)
    src[occupied] = occupied
    src = np.maximum.accumulate(src)
    src[src < 0] = occupied[0]
    matrix = matrix[src]
    return ResampledSequence(session.participant_id, session.story_id, start, matrix,
                             tuple(catalog.names))


@dataclass
class SummaryTable:
    """Samples x summary-features matrix with ids and optional binary labels."""

    keys: list[tuple[str, str]]
    names: list[str]
    X: np.ndarray
    y: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.shape != (len(self.keys), len(self.names)):
            raise ValidationError("summary table shape does not match keys/names")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=np.int64)
            if self.y.shape != (len(self.keys),):
                raise ValidationError("label vector length does not match samples")

    def __len__(self):
        return len(self.keys)

    def columns(self, names: Sequence[str]) -> "SummaryTable":
        idx = [self.names.index(n) for n in names]
        return SummaryTable(list(self.keys), list(names), self.X[:, idx], self.y)

    def samples(self) -> list[SummarySample]:
        labels = [None] * len(self) if self.y is None else [int(v) for v in self.y]
        return [SummarySample(k[0], k[1], row.copy(), tuple(self.names), lab)
                for k, row, lab in zip(self.keys, self.X, labels)]


def build_summary_table(dataset: Dataset, labels: LabelSet | None = None) -> SummaryTable:
    samples = [featurize_session(s, dataset.catalog) for s in dataset.sessions]
    keys = [s.key for s in samples]
    y = None
    if labels is not None:
        missing = [k for k in keys if k not in labels.labels]
        if missing:
            raise ValidationError(f"no label for sessions: {missing[:5]}")
        y = np.array([labels.binary(k) for k in keys])
    names = summary_names(dataset.catalog)
    X = np.vstack([s.vector for s in samples]) if samples else np.empty((0, len(names)))
    return SummaryTable(keys, names, X, y)


def write_summary_table(table: SummaryTable, path: str | Path) -> None:
    frame = pd.DataFrame(table.X, columns=table.names)
    label = pd.array([None] * len(table), dtype="Int64") if table.y is None \
        else pd.array(table.y, dtype="Int64")
    frame.insert(0, "label", label)
    frame.insert(0, "story_id", [k[1] for k in table.keys])
    frame.insert(0, "participant_id", [k[0] for k in table.keys])
    frame.to_csv(path, index=False, lineterminator="\n")


def read_summary_table(path: str | Path) -> SummaryTable:
    frame = pd.read_csv(path, float_precision="round_trip",
                        dtype={"participant_id": str, "story_id": str})
    for col in ("participant_id", "story_id", "label"):
        if col not in frame.columns:
            raise FormatError(f"{path}: missing column {col}")
    names = [c for c in frame.columns if c not in ("participant_id", "story_id", "label")]
    for n in names:
        split_summary_name(n)
    keys = list(zip(frame["participant_id"], frame["story_id"]))
    y = None if frame["label"].isna().any() else frame["label"].to_numpy(dtype=np.int64)
    return SummaryTable(keys, names, frame[names].to_numpy(dtype=float), y)


def write_sequence(seq: ResampledSequence, path: str | Path) -> None:
    frame = pd.DataFrame(seq.matrix, columns=list(seq.names))
    frame.insert(0, "second", seq.grid)
    frame.to_csv(path, index=False, lineterminator="\n")


def read_sequence(path: str | Path, participant_id: str, story_id: str) -> ResampledSequence:
    frame = pd.read_csv(path, float_precision="round_trip")
    seconds = frame["second"].to_numpy()
    names = tuple(c for c in frame.columns if c != "second")
    return ResampledSequence(participant_id, story_id, int(seconds[0]),
                             frame[list(names)].to_numpy(dtype=float), names)
