"""Parsing and cleaning of frame-level facial behavior logs.

Input files follow the OpenFace 2.2.0 ``FeatureExtraction`` CSV layout: five
bookkeeping columns (``frame, face_id, timestamp, confidence, success``)
followed by one column per raw visual feature.  Frames are stored columnar
(one matrix per session) since sessions run to thousands of frames.
"""

from __future__ import annotations

import csv
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import (
    DegenerateDatasetError,
    EmptySessionError,
    FormatError,
    UnclassifiedFeatureError,
    ValidationError,
)

EYE_GAZE = "eye_gaze"
FACIAL_ACTION_UNIT = "facial_action_unit"
FACIAL_LANDMARK = "facial_landmark"
HEAD_POSE = "head_pose"
PDM_PARAMETER = "pdm_parameter"
GROUPS = (EYE_GAZE, FACIAL_ACTION_UNIT, FACIAL_LANDMARK, HEAD_POSE, PDM_PARAMETER)

META_COLUMNS = ("frame", "face_id", "timestamp", "confidence", "success")
REQUIRED_META = ("frame", "timestamp", "confidence", "success")

STORIES = ("S1", "S2", "S3")
VOICES = ("1PNV", "3PNV")

# Session quality below this success fraction is flagged in reports.
MIN_QUALITY = 0.5
CONSTANT_TOL = 1e-12

_PATTERNS = [
    (re.compile(r"^gaze_[01]_[xyz]$|^gaze_angle_[xy]$"), EYE_GAZE),
    (re.compile(r"^AU\d{2}_[rc]$"), FACIAL_ACTION_UNIT),
    (re.compile(r"^eye_lmk_[xyXYZ]_\d+$"), FACIAL_LANDMARK),
    (re.compile(r"^[xyXYZ]_\d+$"), FACIAL_LANDMARK),
    (re.compile(r"^pose_[TR][xyz]$"), HEAD_POSE),
    (re.compile(r"^p_(scale|r[xyz]|t[xy]|\d+)$"), PDM_PARAMETER),
]

# OpenFace 2.2.0 action units: 17 with intensity, 18 with presence (AU28 has no intensity).
AU_INTENSITY = ("01", "02", "04", "05", "06", "07", "09", "10", "12", "14",
                "15", "17", "20", "23", "25", "26", "45")
AU_PRESENCE = AU_INTENSITY[:-1] + ("28", "45")


def classify_feature(name: str) -> str | None:
    for pattern, group in _PATTERNS:
        if pattern.match(name):
            return group
    return None


def au_kind(name: str) -> str | None:
    """``"intensity"`` for ``AUxx_r``, ``"presence"`` for ``AUxx_c``, else None."""
    if classify_feature(name) != FACIAL_ACTION_UNIT:
        return None
    return "intensity" if name.endswith("_r") else "presence"


def openface_feature_names() -> list[str]:
    """The full 709-column OpenFace 2.2.0 feature list, in tool output order."""
    names = [f"gaze_{e}_{a}" for e in (0, 1) for a in "xyz"]
    names += ["gaze_angle_x", "gaze_angle_y"]
    names += [f"eye_lmk_{a}_{i}" for a in "xy" for i in range(56)]
    names += [f"eye_lmk_{a}_{i}" for a in "XYZ" for i in range(56)]
    names += [f"pose_{k}" for k in ("Tx", "Ty", "Tz", "Rx", "Ry", "Rz")]
    names += [f"{a}_{i}" for a in "xy" for i in range(68)]
    names += [f"{a}_{i}" for a in "XYZ" for i in range(68)]
    names += ["p_scale", "p_rx", "p_ry", "p_rz", "p_tx", "p_ty"]
    names += [f"p_{i}" for i in range(34)]
    names += [f"AU{n}_r" for n in AU_INTENSITY]
    names += [f"AU{n}_c" for n in AU_PRESENCE]
    return names


@dataclass(frozen=True)
class FeatureCatalog:
    """Ordered feature names plus their group partition."""

    names: tuple[str, ...]
    groups: Mapping[str, str] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise FormatError(f"duplicate feature columns: {', '.join(dup)}")
        groups = {n: classify_feature(n) for n in names}
        unknown = [n for n, g in groups.items() if g is None]
        if unknown:
            raise UnclassifiedFeatureError(unknown)
        object.__setattr__(self, "groups", groups)

    def __len__(self):
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(f"unknown feature {name!r}") from None

    def subset(self, keep: Sequence[str]) -> "FeatureCatalog":
        keep_set = set(keep)
        return FeatureCatalog(tuple(n for n in self.names if n in keep_set))


def group_features(catalog: FeatureCatalog | Iterable[str]) -> dict[str, list[str]]:
    """Partition feature names into the five visual-cue groups.

    Groups that end up empty are omitted.  Accepts a catalog or raw names, so
    it can be used to vet a header before building a catalog.
    """
    names = catalog.names if isinstance(catalog, FeatureCatalog) else list(catalog)
    out: dict[str, list[str]] = {}
    unknown = []
    for name in names:
        group = classify_feature(name)
        if group is None:
            unknown.append(name)
        else:
            out.setdefault(group, []).append(name)
    if unknown:
        raise UnclassifiedFeatureError(unknown)
    return {g: out[g] for g in GROUPS if g in out}


@dataclass(frozen=True)
class FrameRecord:
    frame_index: int
    timestamp: float
    confidence: float
    success: bool
    values: tuple[float, ...]


@dataclass(frozen=True)
class SessionMeta:
    participant_id: str
    story_id: str
    narrative_voice: str


@dataclass(frozen=True, eq=False)
class Session:
    """One participant x story recording, stored column-wise.

    ``values`` has shape (frames, len(catalog)).  Frames where the tracker
    failed (``success`` false) are kept but excluded from statistics.
    """

    participant_id: str
    story_id: str
    narrative_voice: str
    catalog: FeatureCatalog
    frame_index: np.ndarray
    timestamp: np.ndarray
    confidence: np.ndarray
    success: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.story_id not in STORIES:
            raise ValidationError(f"story_id must be one of {STORIES}, got {self.story_id!r}")
        if self.narrative_voice not in VOICES:
            raise ValidationError(
                f"narrative_voice must be one of {VOICES}, got {self.narrative_voice!r}")
        n = len(self.timestamp)
        if n == 0:
            raise EmptySessionError(f"session {self.key} has no frames")
        if self.values.shape != (n, len(self.catalog)):
            raise ValidationError(
                f"values shape {self.values.shape} does not match "
                f"{n} frames x {len(self.catalog)} features")
        if n < 2:
            raise ValidationError(f"session {self.key}: a single frame has no frame rate")
        steps = np.diff(self.timestamp)
        bad = np.flatnonzero(~(steps > 0))
        if bad.size:
            row = int(bad[0]) + 2  # 1-based data row of the offending frame
            raise ValidationError(
                f"session {self.key}: timestamp not strictly increasing at row {row}")
        if not np.all(np.isfinite(self.timestamp)) or self.timestamp[0] < 0:
            raise ValidationError(f"session {self.key}: timestamps must be finite and >= 0")
        conf = self.confidence
        if np.any(~np.isfinite(conf) | (conf < 0) | (conf > 1)):
            raise ValidationError(f"session {self.key}: confidence outside [0, 1]")
        _check_au_ranges(self.catalog, self.values, self.key)

    @property
    def key(self) -> tuple[str, str]:
        return (self.participant_id, self.story_id)

    @property
    def meta(self) -> SessionMeta:
        return SessionMeta(self.participant_id, self.story_id, self.narrative_voice)

    @property
    def n_frames(self) -> int:
        return len(self.timestamp)

    @property
    def nominal_fps(self) -> float:
        return (self.n_frames - 1) / float(self.timestamp[-1] - self.timestamp[0])

    @property
    def quality(self) -> float:
        """Fraction of frames where the tracker succeeded."""
        return float(np.mean(self.success))

    @property
    def flagged(self) -> bool:
        return self.quality < MIN_QUALITY

    @property
    def frames(self) -> list[FrameRecord]:
        return [
            FrameRecord(int(i), float(t), float(c), bool(s), tuple(v.tolist()))
            for i, t, c, s, v in zip(self.frame_index, self.timestamp,
                                     self.confidence, self.success, self.values)
        ]

    def __eq__(self, other):
        if not isinstance(other, Session):
            return NotImplemented
        return (
            self.meta == other.meta
            and self.catalog.names == other.catalog.names
            and np.array_equal(self.frame_index, other.frame_index)
            and np.array_equal(self.timestamp, other.timestamp)
            and np.array_equal(self.confidence, other.confidence)
            and np.array_equal(self.success, other.success)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None

    def feature(self, name: str, successful_only: bool = True) -> np.ndarray:
        col = self.values[:, self.catalog.index(name)]
        return col[self.success] if successful_only else col


def _check_au_ranges(catalog: FeatureCatalog, values: np.ndarray, key) -> None:
    for j, name in enumerate(catalog.names):
        kind = au_kind(name)
        if kind is None:
            continue
        col = values[:, j]
        col = col[np.isfinite(col)]
        if kind == "presence" and np.any((col != 0) & (col != 1)):
            raise ValidationError(f"session {key}: presence feature {name} not in {{0, 1}}")
        if kind == "intensity" and np.any((col < 0) | (col > 5)):
            raise ValidationError(f"session {key}: intensity feature {name} outside [0, 5]")


@dataclass(frozen=True)
class Dataset:
    catalog: FeatureCatalog
    sessions: tuple[Session, ...]

    def __post_init__(self):
        object.__setattr__(self, "sessions", tuple(self.sessions))
        for s in self.sessions:
            if s.catalog.names != self.catalog.names:
                raise ValidationError(f"session {s.key} does not share the dataset catalog")
        keys = [s.key for s in self.sessions]
        if len(set(keys)) != len(keys):
            raise ValidationError("duplicate (participant_id, story_id) sessions")

    def __len__(self):
        return len(self.sessions)

    def flagged_sessions(self) -> list[tuple[str, str]]:
        return [s.key for s in self.sessions if s.flagged]


def _read_header(path: Path) -> list[str]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh, skipinitialspace=True)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: file is empty (no header)") from None
    return [h.strip() for h in header]


def parse_session(path: str | Path, meta: SessionMeta) -> Session:
    """Read one per-video CSV into a :class:`Session`."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    header = _read_header(path)
    seen = set()
    dups = [h for h in header if h in seen or seen.add(h)]
    if dups:
        raise FormatError(f"{path}: duplicate header columns: {', '.join(dups)}")
    missing = [c for c in REQUIRED_META if c not in header]
    if missing:
        raise FormatError(f"{path}: missing required columns: {', '.join(missing)}")
    feature_names = [h for h in header if h not in META_COLUMNS]
    try:
        catalog = FeatureCatalog(tuple(feature_names))
    except UnclassifiedFeatureError as exc:
        raise UnclassifiedFeatureError(exc.names) from None

    frame = pd.read_csv(path, skipinitialspace=True, float_precision="round_trip")
    frame.columns = [c.strip() for c in frame.columns]
    if len(frame) == 0:
        raise EmptySessionError(f"{path}: header only, no frames")
    try:
        numeric = frame.apply(pd.to_numeric, errors="raise")
    except (ValueError, TypeError) as exc:
        raise FormatError(f"{path}: non-numeric cell: {exc}") from None

    for col in REQUIRED_META:
        if numeric[col].isna().any():
            row = int(np.flatnonzero(numeric[col].isna().to_numpy())[0]) + 1
            raise ValidationError(f"{path}: missing {col} at row {row}")
    success = numeric["success"].to_numpy()
    if np.any((success != 0) & (success != 1)):
        raise ValidationError(f"{path}: success must be 0 or 1")
    values = numeric[feature_names].to_numpy(dtype=float) if feature_names \
        else np.empty((len(frame), 0))
    try:
        return Session(
            participant_id=meta.participant_id,
            story_id=meta.story_id,
            narrative_voice=meta.narrative_voice,
            catalog=catalog,
            frame_index=numeric["frame"].to_numpy(dtype=np.int64),
            timestamp=numeric["timestamp"].to_numpy(dtype=float),
            confidence=numeric["confidence"].to_numpy(dtype=float),
            success=success.astype(bool),
            values=np.ascontiguousarray(values),
        )
    except ValidationError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def write_session(session: Session, path: str | Path) -> None:
    """Write a session in the same CSV layout :func:`parse_session` reads.

    Floats are written with shortest round-trip repr, so re-parsing yields
    bit-identical arrays.  Missing values become empty cells.
    """
    header = [*META_COLUMNS, *session.catalog.names]
    values = session.values.tolist()
    if np.isnan(session.values).any():
        values = [["" if v != v else v for v in row] for row in values]
    meta = zip(session.frame_index.tolist(), session.timestamp.tolist(),
               session.confidence.tolist(), session.success.astype(int).tolist())
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for (frame, ts, conf, ok), row in zip(meta, values):
            fh.write(f"{frame},0,{ts!r},{conf!r},{ok},")
            fh.write(",".join(map(str, row)) + "\n")


METADATA_COLUMNS = ("file", "participant_id", "story_id", "narrative_voice")


def read_metadata(path: str | Path) -> dict[str, SessionMeta]:
    """Sidecar file mapping session file name -> participant/story/voice."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, skipinitialspace=True)
        if reader.fieldnames is None or any(c not in reader.fieldnames for c in METADATA_COLUMNS):
            raise FormatError(f"{path}: metadata header must contain {', '.join(METADATA_COLUMNS)}")
        out = {}
        for row in reader:
            out[row["file"]] = SessionMeta(row["participant_id"], row["story_id"],
                                           row["narrative_voice"])
    return out


def write_metadata(entries: Mapping[str, SessionMeta], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METADATA_COLUMNS)
        for name, meta in entries.items():
            writer.writerow([name, meta.participant_id, meta.story_id, meta.narrative_voice])


def load_dataset(metadata_path: str | Path, jobs: int = 1) -> Dataset:
    """Parse every session listed in a metadata sidecar (paths relative to it)."""
    metadata_path = Path(metadata_path)
    entries = read_metadata(metadata_path)
    if not entries:
        raise DegenerateDatasetError(f"{metadata_path}: no sessions listed")
    base = metadata_path.parent
    items = list(entries.items())
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            sessions = list(pool.map(lambda kv: parse_session(base / kv[0], kv[1]), items))
    else:
        sessions = [parse_session(base / name, meta) for name, meta in items]
    catalog = sessions[0].catalog
    for s, (name, _) in zip(sessions, items):
        if s.catalog.names != catalog.names:
            raise FormatError(f"{name}: header differs from {items[0][0]}")
    return Dataset(catalog, sessions)


def save_dataset(dataset: Dataset, directory: str | Path,
                 metadata_name: str = "metadata.csv") -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = {}
    for s in dataset.sessions:
        name = f"{s.participant_id}_{s.story_id}.csv"
        write_session(s, directory / name)
        entries[name] = s.meta
    meta_path = directory / metadata_name
    write_metadata(entries, meta_path)
    return meta_path


def clean_features(dataset: Dataset) -> tuple[Dataset, list[str]]:
    """Drop features that are null or constant across all frames of all sessions.

    Remaining non-finite cells are imputed with the median of the column's
    finite values within the same session (falling back to the pooled median
    when a session has none).
    """
    if len(dataset) == 0:
        raise DegenerateDatasetError("cannot clean an empty dataset")
    names = dataset.catalog.names
    n_feat = len(names)
    lo = np.full(n_feat, np.inf)
    hi = np.full(n_feat, -np.inf)
    any_finite = np.zeros(n_feat, dtype=bool)
    for s in dataset.sessions:
        v = s.values
        finite = np.isfinite(v)
        any_finite |= finite.any(axis=0)
        lo = np.minimum(lo, np.where(finite, v, np.inf).min(axis=0))
        hi = np.maximum(hi, np.where(finite, v, -np.inf).max(axis=0))
    keep = any_finite & ((hi - lo) > CONSTANT_TOL)
    removed = [n for n, k in zip(names, keep) if not k]
    if not keep.any():
        raise DegenerateDatasetError("every feature is null or constant")
    catalog = FeatureCatalog(tuple(n for n, k in zip(names, keep) if k))

    pooled = None
    sessions = []
    for s in dataset.sessions:
        v = s.values[:, keep]
        bad = ~np.isfinite(v)
        if bad.any():
            v = v.copy()
            for j in np.flatnonzero(bad.any(axis=0)):
                col = v[:, j]
                ok = np.isfinite(col)
                if ok.any():
                    fill = np.median(col[ok])
                else:
                    if pooled is None:
                        pooled = _pooled_medians(dataset, keep)
                    fill = pooled[j]
                col[~ok] = fill
        sessions.append(replace(s, catalog=catalog, values=np.ascontiguousarray(v)))
    return Dataset(catalog, sessions), removed


def _pooled_medians(dataset: Dataset, keep: np.ndarray) -> np.ndarray:
    stacked = np.vstack([s.values[:, keep] for s in dataset.sessions])
    stacked = np.where(np.isfinite(stacked), stacked, np.nan)
    return np.nanmedian(stacked, axis=0)
