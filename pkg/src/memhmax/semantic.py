"""Geometric face attributes, population z-normalisation and dominant-part
selection.

Attribute formulas (landmark indices in the 68-point layout, ``d`` is the
Euclidean distance, per-eye values are averaged over both eyes):

====  ==================  ======  ================================================
 idx  name                part    definition
====  ==================  ======  ================================================
   0  eye_area            eyes    shoelace area of the 6 eye points
   1  eye_length          eyes    d(outer corner, inner corner): d(36,39), d(42,45)
   2  eye_height          eyes    mean of d(37,41), d(38,40) (resp. 43/47, 44/46)
   3  eye_ratio           eyes    eye_length / eye_height
   4  brow_eye_distance   eyes    d(brow middle 19|24, upper-lid midpoint 37-38|43-44)
   5  eye_cheek_ratio     eyes    eye_length / d(1,15)
   6  nose_width          nose    d(31,35)
   7  nose_ratio          nose    d(27,33) / d(31,35)
   8  court_ratio         nose    d(27,33) / d(27,8)
   9  mouth_length        mouth   d(48,54)
  10  mouth_height        mouth   d(51,57)
  11  mouth_ratio         mouth   mouth_length / mouth_height
  12  philtrum_length     mouth   d(33,51)
====  ==================  ======  ================================================

The table is versioned by ``ATTRIBUTE_VERSION``; stored vectors are only
comparable between releases with the same version.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, EmptyInputError, RangeError, ShapeError
from .imaging import GrayImage, LandmarkSet, Rect

ATTRIBUTE_VERSION = 1

ATTRIBUTES = (
    "eye_area", "eye_length", "eye_height", "eye_ratio", "brow_eye_distance", "eye_cheek_ratio",
    "nose_width", "nose_ratio", "court_ratio",
    "mouth_length", "mouth_height", "mouth_ratio", "philtrum_length",
)
ATTRIBUTE_PART = ("eyes",) * 6 + ("nose",) * 3 + ("mouth",) * 4
N_ATTRIBUTES = len(ATTRIBUTES)
PARTS = ("eyes", "nose", "mouth")

RATIO_ATTRIBUTES = frozenset({"eye_ratio", "eye_cheek_ratio", "nose_ratio", "court_ratio", "mouth_ratio"})
AREA_ATTRIBUTES = frozenset({"eye_area"})

# landmark ranges that make up each episodic part
PART_LANDMARKS = {
    "eyes": range(36, 48),
    "nose": range(27, 36),
    "mouth": range(48, 68),
}

EPISODIC_MARGIN = 0.2


@dataclass(frozen=True)
class DominantAttribute:
    index: int
    part: str
    deviation: float

    @property
    def name(self) -> str:
        return ATTRIBUTES[self.index]


@dataclass(frozen=True, eq=False)
class PopulationStats:
    mean: np.ndarray
    std: np.ndarray
    count: int

    def __post_init__(self):
        for name in ("mean", "std"):
            a = np.array(getattr(self, name), dtype=np.float64)
            if a.shape != (N_ATTRIBUTES,) or not np.all(np.isfinite(a)):
                raise ShapeError(f"population {name} must hold {N_ATTRIBUTES} finite values")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if np.any(self.std < 0):
            raise RangeError("standard deviations must be >= 0")
        if self.count < 1:
            raise RangeError("population count must be >= 1")

    def __eq__(self, other):
        if not isinstance(other, PopulationStats):
            return NotImplemented
        return self.count == other.count and np.array_equal(self.mean, other.mean) \
            and np.array_equal(self.std, other.std)

    __hash__ = None


def _d(p: np.ndarray, i: int, j: int) -> float:
    return math.hypot(p[i, 0] - p[j, 0], p[i, 1] - p[j, 1])


def _shoelace(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def eye_measurements(lm: LandmarkSet, side: str) -> dict:
    """Area, length, height and brow distance of one eye (``"right"``/``"left"``)."""
    p = lm.points
    base, brow = (36, 19) if side == "right" else (42, 24)
    lid_mid = (p[base + 1] + p[base + 2]) / 2.0
    return {
        "area": _shoelace(p[base:base + 6]),
        "length": _d(p, base, base + 3),
        "height": (_d(p, base + 1, base + 5) + _d(p, base + 2, base + 4)) / 2.0,
        "brow": math.hypot(p[brow, 0] - lid_mid[0], p[brow, 1] - lid_mid[1]),
    }


def _ratio(num: float, den: float, what: str) -> float:
    if den == 0.0:
        raise DegenerateError(f"{what}: denominator is zero (coincident landmarks)")
    return num / den


def geometric_features(lm: LandmarkSet) -> np.ndarray:
    """Raw attribute vector (length 13, ordering of ``ATTRIBUTES``)."""
    p = lm.points
    r = eye_measurements(lm, "right")
    l = eye_measurements(lm, "left")
    eye_area = (r["area"] + l["area"]) / 2.0
    eye_length = (r["length"] + l["length"]) / 2.0
    eye_height = (r["height"] + l["height"]) / 2.0
    brow = (r["brow"] + l["brow"]) / 2.0
    cheek = _d(p, 1, 15)
    nose_width = _d(p, 31, 35)
    nose_length = _d(p, 27, 33)
    face_height = _d(p, 27, 8)
    mouth_length = _d(p, 48, 54)
    mouth_height = _d(p, 51, 57)
    return np.array([
        eye_area,
        eye_length,
        eye_height,
        _ratio(eye_length, eye_height, "eye_ratio"),
        brow,
        _ratio(eye_length, cheek, "eye_cheek_ratio"),
        nose_width,
        _ratio(nose_length, nose_width, "nose_ratio"),
        _ratio(nose_length, face_height, "court_ratio"),
        mouth_length,
        mouth_height,
        _ratio(mouth_length, mouth_height, "mouth_ratio"),
        _d(p, 33, 51),
    ])


def population_stats(samples) -> PopulationStats:
    """Per-attribute mean and population standard deviation (divide by n)."""
    a = np.asarray(samples, dtype=np.float64)
    if a.size == 0 or len(a) == 0:
        raise EmptyInputError("population statistics need at least one sample")
    a = a.reshape(len(a), -1)
    if a.shape[1] != N_ATTRIBUTES:
        raise ShapeError(f"samples must have {N_ATTRIBUTES} attributes, got {a.shape[1]}")
    mean = a.mean(axis=0)
    std = np.sqrt(((a - mean) ** 2).mean(axis=0))
    return PopulationStats(mean, std, len(a))


def normalize(raw, stats: PopulationStats) -> np.ndarray:
    """z-score against ``stats``; attributes with zero spread map to 0."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape[-1] != N_ATTRIBUTES:
        raise ShapeError(f"expected {N_ATTRIBUTES} attributes, got {raw.shape[-1]}")
    safe = np.where(stats.std > 0, stats.std, 1.0)
    return np.where(stats.std > 0, (raw - stats.mean) / safe, 0.0)


def dominant_attribute(a) -> DominantAttribute:
    # the population average of z-scores is 0, so the distance to the average
    # attribute is just |a_j|; argmax returns the first (lowest) index on ties
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (N_ATTRIBUTES,) or not np.all(np.isfinite(a)):
        raise ShapeError(f"semantic vector must hold {N_ATTRIBUTES} finite values")
    dev = np.abs(a)
    j = int(np.argmax(dev))
    return DominantAttribute(j, ATTRIBUTE_PART[j], float(dev[j]))


def episodic_region(lm: LandmarkSet, part: str, image: GrayImage | tuple | None = None,
                    margin: float = EPISODIC_MARGIN) -> Rect:
    """Bounding box of the part's landmarks grown by ``margin`` on each side and
    clamped to the image (``image`` may be a GrayImage or ``(width, height)``)."""
    if part not in PART_LANDMARKS:
        raise RangeError(f"unknown part {part!r}")
    idx = PART_LANDMARKS[part]
    if len(idx) == 0:
        raise RangeError(f"part {part!r} has no landmarks")
    pts = lm.points[idx.start:idx.stop]
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    mx = margin * (x1 - x0)
    my = margin * (y1 - y0)
    left = math.floor(x0 - mx)
    top = math.floor(y0 - my)
    right = math.ceil(x1 + mx) + 1
    bottom = math.ceil(y1 + my) + 1
    if image is not None:
        width, height = (image.width, image.height) if isinstance(image, GrayImage) else image
        left, top = max(left, 0), max(top, 0)
        right, bottom = min(right, width), min(bottom, height)
    else:
        left, top = max(left, 0), max(top, 0)
    return Rect(left, top, max(right - left, 1), max(bottom - top, 1))
