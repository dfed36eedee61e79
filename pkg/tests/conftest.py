import numpy as np
import pytest

from empathy_detect.ingest import FeatureCatalog, Session
from empathy_detect.synth import Effect, SynthConfig, generate_dataset


def make_session(values, timestamps=None, names=None, success=None, pid="P001", story="S1",
                 voice="1PNV"):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    n, f = values.shape
    if names is None:
        names = ["gaze_angle_x", "gaze_angle_y"][:f]
    ts = np.arange(n) / 30.0 if timestamps is None else np.asarray(timestamps, dtype=float)
    ok = np.ones(n, dtype=bool) if success is None else np.asarray(success, dtype=bool)
    return Session(pid, story, voice, FeatureCatalog(tuple(names)), np.arange(1, n + 1),
                   ts, np.where(ok, 0.95, 0.0), ok, values)


def write_csv(path, header, rows):
    lines = [", ".join(header)] + [", ".join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="session")
def small_synth():
    """30 short sessions with AU14 intensity planted."""
    cfg = SynthConfig(participants=10, duration=20.0, seed=11,
                      effects=(Effect("AU14_r", 0.23, 0.11, 0.08),))
    return generate_dataset(cfg)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
