"""Synthetic frame-level datasets with planted class effects.

Every feature is a unit-variance AR(1) process (exponentially smoothed white
noise) scaled by a noise level and shifted to a mean.  Planted features take
their mean from the session's class; all other features draw a per-session
mean around a dataset-wide baseline, independent of class.  Presence (``_c``)
features threshold the latent process so their frame-wise mean equals the
configured probability.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import NormalDist
from typing import Sequence

import numpy as np

from .errors import FormatError, ValidationError
from .ingest import (
    EYE_GAZE,
    FACIAL_LANDMARK,
    HEAD_POSE,
    PDM_PARAMETER,
    STORIES,
    Dataset,
    FeatureCatalog,
    Session,
    au_kind,
    classify_feature,
    openface_feature_names,
    save_dataset,
)
from .labels import (
    EMPATHIC,
    N_ITEMS,
    LabelSet,
    QuestionnaireResponse,
    empathy_score,
    median_split,
    write_labels,
    write_questionnaires,
)

DEFAULT_SCHEMA = (
    "gaze_0_x", "gaze_0_y", "gaze_angle_x", "gaze_angle_y",
    "eye_lmk_x_0", "eye_lmk_y_0", "x_0", "y_0", "x_30", "y_30",
    "pose_Tx", "pose_Tz", "pose_Rx", "pose_Ry",
    "p_scale", "p_rx", "p_1", "p_18",
    "AU06_r", "AU12_r", "AU14_r", "AU17_r", "AU23_r",
    "AU06_c", "AU12_c", "AU14_c", "AU17_c", "AU23_c",
)
DEFAULT_SMOOTHING = 0.05

# empathy scores are drawn from disjoint ranges so the median split recovers the classes
_HIGH_SCORES = (25, 34)
_LOW_SCORES = (15, 24)


@dataclass(frozen=True)
class Effect:
    feature: str
    empathic_mean: float
    less_empathic_mean: float
    noise: float = 0.08
    smoothing: float = DEFAULT_SMOOTHING


@dataclass(frozen=True)
class SynthConfig:
    participants: int = 40
    stories: int = 3
    duration: float = 180.0
    fps: float = 30.0
    features: tuple[str, ...] = DEFAULT_SCHEMA
    effects: tuple[Effect, ...] = ()
    balance: float = 0.5
    failure_rate: float = 0.01
    seed: int = 0

    def __post_init__(self):
        feats = tuple(openface_feature_names()) if self.features == "all" else tuple(self.features)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "effects", tuple(
            e if isinstance(e, Effect) else Effect(**e) for e in self.effects))
        if self.participants < 1:
            raise ValidationError("participants must be >= 1")
        if not 1 <= self.stories <= len(STORIES):
            raise ValidationError(f"stories must be in 1..{len(STORIES)}")
        if not self.duration > 0 or not self.fps > 0:
            raise ValidationError("duration and fps must be positive")
        if round(self.duration * self.fps) < 2:
            raise ValidationError("sessions need at least two frames")
        if not 0 < self.balance < 1:
            raise ValidationError("balance must be in (0, 1)")
        if not 0 <= self.failure_rate < 1:
            raise ValidationError("failure_rate must be in [0, 1)")
        try:
            FeatureCatalog(feats)
        except FormatError as exc:
            raise ValidationError(f"feature schema: {exc}") from None
        seen = set()
        for e in self.effects:
            if e.feature not in feats:
                raise ValidationError(f"effect on {e.feature!r}, which is not in the schema")
            if e.feature in seen:
                raise ValidationError(f"two effects on {e.feature!r}")
            seen.add(e.feature)
            if not 0 < e.smoothing <= 1 or e.noise < 0:
                raise ValidationError(f"effect {e.feature}: smoothing in (0, 1], noise >= 0")
            if au_kind(e.feature) == "presence":
                if not {e.empathic_mean, e.less_empathic_mean} <= {0.0, 1.0}:
                    raise ValidationError(
                        f"effect {e.feature}: presence means must be 0 or 1")
                continue
            lo, hi = (0.0, 5.0) if au_kind(e.feature) == "intensity" else (-math.inf, math.inf)
            for m in (e.empathic_mean, e.less_empathic_mean):
                if not lo <= m <= hi:
                    raise ValidationError(
                        f"effect {e.feature}: mean {m} outside legal range [{lo}, {hi}]")

    @property
    def n_frames(self) -> int:
        return int(round(self.duration * self.fps))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["features"] = list(self.features)
        d["effects"] = [asdict(e) for e in self.effects]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "features" in d and d["features"] != "all":
            d["features"] = tuple(d["features"])
        d["effects"] = tuple(Effect(**e) for e in d.get("effects", ()))
        return cls(**d)


@dataclass
class SyntheticData:
    dataset: Dataset
    labels: LabelSet
    planted: dict[tuple[str, str], int]
    responses: list[QuestionnaireResponse] = field(default_factory=list)
    config: SynthConfig | None = None


# (mean location, mean spread, per-session spread, frame noise) per feature kind
def _feature_profile(name: str):
    kind = au_kind(name)
    if kind == "intensity":
        return (0.3, 0.15, 0.08, 0.15)
    if kind == "presence":
        return (0.2, 0.08, 0.05, 0.0)
    group = classify_feature(name)
    if group == EYE_GAZE:
        return (0.0, 0.15, 0.05, 0.08)
    if group == FACIAL_LANDMARK:
        base = 300.0 if name[0] in "xyXY" or name.startswith("eye_lmk_") else 500.0
        return (base, 40.0, 4.0, 1.5)
    if group == HEAD_POSE:
        return (0.0, 0.1, 0.05, 0.02) if name.startswith("pose_R") else (0.0, 40.0, 10.0, 2.0)
    if group == PDM_PARAMETER:
        if name == "p_scale":
            return (1.0, 0.1, 0.05, 0.01)
        if name in ("p_tx", "p_ty"):
            return (300.0, 40.0, 10.0, 2.0)
        return (0.0, 3.0, 1.5, 0.5)
    raise ValidationError(f"no synthetic profile for {name!r}")


def _ar1(rng, n_frames, n_cols, smoothing):
    """Unit-variance AR(1) columns with coefficient ``1 - smoothing``."""
    rho = 1.0 - np.asarray(smoothing, dtype=float) * np.ones(n_cols)
    innov = rng.standard_normal((n_frames, n_cols)) * np.sqrt(1.0 - rho ** 2)
    out = np.empty((n_frames, n_cols))
    out[0] = rng.standard_normal(n_cols)
    for t in range(1, n_frames):
        out[t] = rho * out[t - 1] + innov[t]
    return out


def _questionnaire(rng, participant, story, empathic: bool) -> QuestionnaireResponse:
    lo, hi = _HIGH_SCORES if empathic else _LOW_SCORES
    score = int(rng.integers(lo, hi + 1))
    base, extra = divmod(score, N_ITEMS)
    items = np.full(N_ITEMS, base)
    items[:extra] += 1
    return QuestionnaireResponse(participant, story, tuple(int(v) for v in rng.permutation(items)))


def generate_dataset(config: SynthConfig) -> SyntheticData:
    names = config.features
    catalog = FeatureCatalog(names)
    n_sessions = config.participants * config.stories
    n_pos = int(config.balance * n_sessions)
    root = np.random.SeedSequence(int(config.seed))
    base_seq, label_seq, *session_seqs = root.spawn(2 + n_sessions)

    base_rng = np.random.default_rng(base_seq)
    profiles = [_feature_profile(n) for n in names]
    baseline = np.array([loc + spread * base_rng.standard_normal() for loc, spread, _, _ in profiles])
    session_sd = np.array([p[2] for p in profiles])
    frame_sd = np.array([p[3] for p in profiles])
    smoothing = np.full(len(names), DEFAULT_SMOOTHING)
    effect_of = {e.feature: e for e in config.effects}
    for j, n in enumerate(names):
        if n in effect_of:
            smoothing[j] = effect_of[n].smoothing
            frame_sd[j] = effect_of[n].noise
    kinds = [au_kind(n) for n in names]
    presence = np.array([k == "presence" for k in kinds])
    intensity = np.array([k == "intensity" for k in kinds])
    planted_cols = np.array([n in effect_of for n in names])

    label_rng = np.random.default_rng(label_seq)
    classes = np.zeros(n_sessions, dtype=int)
    classes[label_rng.permutation(n_sessions)[:n_pos]] = 1
    voices = label_rng.permutation(
        np.array(["1PNV", "3PNV"] * ((config.participants + 1) // 2))[:config.participants])

    n = config.n_frames
    timestamp = np.arange(n) / config.fps
    frame_index = np.arange(1, n + 1, dtype=np.int64)
    normal = NormalDist()
    sessions, planted, responses = [], {}, []
    for s_idx in range(n_sessions):
        p_idx, st_idx = divmod(s_idx, config.stories)
        pid, sid = f"P{p_idx + 1:03d}", STORIES[st_idx]
        rng = np.random.default_rng(session_seqs[s_idx])
        cls = int(classes[s_idx])
        means = baseline + session_sd * rng.standard_normal(len(names))
        for j, n_ in enumerate(names):
            if n_ in effect_of:
                e = effect_of[n_]
                means[j] = e.empathic_mean if cls else e.less_empathic_mean
        means[presence & ~planted_cols] = np.clip(means[presence & ~planted_cols], 0.02, 0.98)
        means[intensity & ~planted_cols] = np.clip(means[intensity & ~planted_cols], 0.0, 5.0)
        latent = _ar1(rng, n, len(names), smoothing)
        values = means + frame_sd * latent
        if presence.any():
            cut = np.array([normal.inv_cdf(min(max(m, 1e-12), 1 - 1e-12)) for m in means[presence]])
            pres = (latent[:, presence] < cut).astype(float)
            pres[:, means[presence] <= 0] = 0.0
            pres[:, means[presence] >= 1] = 1.0
            values[:, presence] = pres
        values[:, intensity] = np.clip(values[:, intensity], 0.0, 5.0)
        success = rng.random(n) >= config.failure_rate
        if not success.any():
            success[0] = True
        confidence = np.where(success, rng.uniform(0.85, 0.98, n), 0.0)
        values[~success] = 0.0
        sessions.append(Session(pid, sid, str(voices[p_idx]), catalog, frame_index.copy(),
                                timestamp.copy(), confidence, success, values))
        planted[(pid, sid)] = cls
        responses.append(_questionnaire(rng, pid, sid, bool(cls)))

    labels = median_split({r.key: empathy_score(r) for r in responses})
    return SyntheticData(Dataset(catalog, sessions), labels, planted, responses, config)


def planted_matches_labels(data: SyntheticData) -> bool:
    return all((data.labels.labels[k] == EMPATHIC) == bool(v) for k, v in data.planted.items())


def write_synthetic(data: SyntheticData, directory: str | Path) -> dict[str, Path]:
    """Emit session CSVs, metadata sidecar, questionnaires and ground-truth labels."""
    directory = Path(directory)
    meta = save_dataset(data.dataset, directory)
    q = directory / "questionnaires.csv"
    write_questionnaires(data.responses, q)
    lab = directory / "labels.csv"
    write_labels(data.labels, lab)
    out = {"metadata": meta, "questionnaires": q, "labels": lab}
    if data.config is not None:
        cfg = directory / "synth_config.json"
        cfg.write_text(json.dumps(data.config.to_dict(), indent=2, sort_keys=True) + "\n")
        out["config"] = cfg
    return out


def fau_effects(features: Sequence[str], gap: float = 0.12, noise: float = 0.08):
    """Effects on every FAU intensity feature of a schema (empathic higher by ``gap``)."""
    out = []
    for name in features:
        if au_kind(name) == "intensity":
            out.append(Effect(name, 0.11 + gap, 0.11, noise))
    return tuple(out)
