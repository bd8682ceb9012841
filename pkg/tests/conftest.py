import numpy as np
import pytest

from memhmax.hmax import build_gabor_bank
from memhmax.imaging import N_LANDMARKS, LandmarkSet
from memhmax.synthetic import SyntheticFaceSpec, face_layout, render_sample

_VERDICTS = []


def record_verdict(criterion: str, ok: bool, detail: str = "") -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {criterion}" + (f" -- {detail}" if detail else "")
    _VERDICTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def bank():
    return build_gabor_bank()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def neutral_face():
    """Landmarks of the undistorted 128px schematic face."""
    return LandmarkSet(face_layout({}, 128)["points"])


def random_landmarks(rng, size=128) -> LandmarkSet:
    geom = {k: float(rng.uniform(0.7, 1.3)) for k in ("eye_scale", "nose_width", "mouth_scale", "philtrum")}
    pts = face_layout(geom, size, *rng.uniform(-3, 3, 2))["points"]
    pts = pts + rng.normal(0, 0.4, pts.shape)
    assert pts.shape == (N_LANDMARKS, 2)
    return LandmarkSet(np.clip(pts, 0, size - 1))


@pytest.fixture(scope="session")
def face_samples():
    """Three small synthetic identities, five images each, as (image, landmarks)."""
    specs = [
        SyntheticFaceSpec(1, "a", 3, {"mouth_scale": 1.35}, n_memory=4, n_test=1),
        SyntheticFaceSpec(2, "b", 3, {"eye_scale": 1.35}, n_memory=4, n_test=1),
        SyntheticFaceSpec(3, "c", 3, {"nose_width": 1.45}, n_memory=4, n_test=1),
    ]
    return {s.id: [render_sample(s, i) for i in range(5)] for s in specs}
