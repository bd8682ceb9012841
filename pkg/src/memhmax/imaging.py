"""Image and landmark I/O plus the raster primitives used downstream.

Landmarks follow the usual 68-point annotation layout (0-indexed, subject's
point of view for left/right):

    jaw         0-16
    right_brow  17-21
    left_brow   22-26
    nose        27-35   (bridge 27-30, lower nose 31-35)
    right_eye   36-41
    left_eye    42-47
    mouth       48-67   (outer lip 48-59, inner lip 60-67)
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import FormatError, MemHmaxIOError, RangeError

N_LANDMARKS = 68

PART_INDEX: dict[str, range] = {
    "jaw": range(0, 17),
    "right_brow": range(17, 22),
    "left_brow": range(22, 27),
    "nose": range(27, 36),
    "right_eye": range(36, 42),
    "left_eye": range(42, 48),
    "mouth": range(48, 68),
}

# ITU-R BT.601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Row-major luminance raster with values in [0, 1].

    ``data`` has shape ``(height, width)``.
    """

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise RangeError(f"image must be a non-empty 2-D array, got shape {a.shape}")
        if not np.all(np.isfinite(a)) or a.min() < 0.0 or a.max() > 1.0:
            raise RangeError("pixel values must be finite and in [0, 1]")
        object.__setattr__(self, "data", _frozen(a))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise RangeError(f"rect must have w, h >= 1, got {self}")

    def inside(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.x + self.w <= width and self.y + self.h <= height

    def contains(self, x: float, y: float) -> bool:
        return self.x <= x <= self.x + self.w and self.y <= y <= self.y + self.h


@dataclass(frozen=True, eq=False)
class LandmarkSet:
    """68 ordered ``(x, y)`` control points."""

    points: np.ndarray
    part_index: dict = field(default_factory=lambda: dict(PART_INDEX))

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        if p.shape != (N_LANDMARKS, 2):
            raise FormatError(f"expected {N_LANDMARKS} points, got array of shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise RangeError("landmark coordinates must be finite")
        if p.min() < 0:
            raise RangeError("landmark coordinates must be non-negative")
        object.__setattr__(self, "points", _frozen(p))

    def part(self, name: str) -> np.ndarray:
        return self.points[self.part_index[name].start:self.part_index[name].stop]

    def check_inside(self, img: GrayImage) -> None:
        """Raise RangeError unless every point lies inside ``img``."""
        xs, ys = self.points[:, 0], self.points[:, 1]
        if xs.max() > img.width - 1 or ys.max() > img.height - 1:
            raise RangeError("landmarks fall outside the image bounds")

    def scaled(self, factor: float) -> "LandmarkSet":
        return LandmarkSet(self.points * factor)

    def __eq__(self, other):
        if not isinstance(other, LandmarkSet):
            return NotImplemented
        return bool(np.array_equal(self.points, other.points))

    __hash__ = None


# ---------------------------------------------------------------------------
# image files

def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise MemHmaxIOError(f"cannot read {path}: {exc}") from exc


def _parse_pgm(raw: bytes, path) -> GrayImage:
    # header: magic, width, height, maxval separated by whitespace; '#' comments allowed
    tokens = []
    pos = 0
    n = len(raw)
    while len(tokens) < 4:
        while pos < n and raw[pos:pos + 1].isspace():
            pos += 1
        if pos < n and raw[pos:pos + 1] == b"#":
            while pos < n and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not raw[pos:pos + 1].isspace() and raw[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace byte before the raster
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: unsupported magic {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PGM header") from exc
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM (maxval 255) is supported, got {maxval}")
    if width < 1 or height < 1:
        raise FormatError(f"{path}: empty image")
    body = raw[pos:pos + width * height]
    if len(body) != width * height:
        raise FormatError(f"{path}: raster truncated")
    pix = np.frombuffer(body, dtype=np.uint8).reshape(height, width)
    return GrayImage(pix / 255.0)


def load_image(path) -> GrayImage:
    """Load an 8-bit binary PGM (P5) or an 8-bit gray/RGB PNG.

    RGB is reduced with BT.601 luma weights; values are scaled by 1/255.
    """
    raw = _read_bytes(path)
    if raw[:2] == b"P5" or raw[:1] == b"P":
        return _parse_pgm(raw, path)
    if raw[:8] != b"\x89PNG\r\n\x1a\n":
        raise FormatError(f"{path}: not a PGM or PNG file")
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            arr = np.asarray(im)
    except OSError as exc:
        raise FormatError(f"{path}: unreadable PNG: {exc}") from exc
    if mode == "L":
        return GrayImage(arr.astype(np.float64) / 255.0)
    if mode == "RGB":
        gray = arr.astype(np.float64) @ _LUMA
        return GrayImage(np.clip(gray / 255.0, 0.0, 1.0))
    raise FormatError(f"{path}: unsupported PNG mode {mode!r} (need 8-bit L or RGB)")


def to_uint8(img: GrayImage) -> np.ndarray:
    return np.rint(img.data * 255.0).astype(np.uint8)


def save_png(img: GrayImage, path) -> None:
    try:
        Image.fromarray(to_uint8(img), mode="L").save(path, format="PNG")
    except OSError as exc:
        raise MemHmaxIOError(f"cannot write {path}: {exc}") from exc


def save_pgm(img: GrayImage, path) -> None:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    try:
        Path(path).write_bytes(header + to_uint8(img).tobytes())
    except OSError as exc:
        raise MemHmaxIOError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# pts landmark files

_HEADER_RE = re.compile(r"^\s*(\w+)\s*:\s*(\S+)\s*$")


def parse_landmarks(path) -> LandmarkSet:
    """Parse a ``.pts`` file (``version: 1`` / ``n_points: 68`` / ``{`` rows ``}``)."""
    text = _read_bytes(path).decode("utf-8", errors="replace")
    return parse_landmarks_text(text, source=str(path))


def parse_landmarks_text(text: str, source: str = "<string>") -> LandmarkSet:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    header = {}
    i = 0
    while i < len(lines) and lines[i] != "{":
        m = _HEADER_RE.match(lines[i])
        if not m:
            raise FormatError(f"{source}: bad header line {lines[i]!r}")
        header[m.group(1)] = m.group(2)
        i += 1
    if header.get("version") != "1":
        raise FormatError(f"{source}: expected 'version: 1'")
    try:
        n_points = int(header.get("n_points", ""))
    except ValueError as exc:
        raise FormatError(f"{source}: missing or malformed n_points") from exc
    if n_points != N_LANDMARKS:
        raise FormatError(f"{source}: n_points must be {N_LANDMARKS}, got {n_points}")
    if i >= len(lines):
        raise FormatError(f"{source}: missing '{{'")
    try:
        end = lines.index("}", i + 1)
    except ValueError as exc:
        raise FormatError(f"{source}: missing '}}'") from exc
    rows = lines[i + 1:end]
    if len(rows) != n_points:
        raise FormatError(f"{source}: declared {n_points} points, found {len(rows)}")
    pts = []
    for k, row in enumerate(rows):
        parts = row.split()
        if len(parts) != 2:
            raise FormatError(f"{source}: point {k} is not an 'x y' pair")
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise FormatError(f"{source}: point {k} is not numeric") from exc
        if not (math.isfinite(x) and math.isfinite(y)):
            raise FormatError(f"{source}: point {k} is not finite")
        if x < 0 or y < 0:
            raise RangeError(f"{source}: point {k} has a negative coordinate")
        pts.append((x, y))
    return LandmarkSet(np.array(pts))


def format_landmarks(lm: LandmarkSet) -> str:
    rows = "\n".join(f"{x!r} {y!r}" for x, y in lm.points.tolist())
    return f"version: 1\nn_points: {N_LANDMARKS}\n{{\n{rows}\n}}\n"


def write_landmarks(lm: LandmarkSet, path) -> None:
    try:
        Path(path).write_text(format_landmarks(lm), encoding="utf-8")
    except OSError as exc:
        raise MemHmaxIOError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# resampling

def _sample_coords(start: int, extent: int, n_out: int) -> np.ndarray:
    # pixel-centre alignment, clamped to the crop so nothing bleeds in from outside
    c = start + (np.arange(n_out) + 0.5) * (extent / n_out) - 0.5
    return np.clip(c, start, start + extent - 1)


def crop_resample(img: GrayImage, r: Rect, out_w: int, out_h: int) -> GrayImage:
    """Crop ``r`` out of ``img`` and bilinearly resample it to ``out_w`` x ``out_h``."""
    if out_w < 1 or out_h < 1:
        raise RangeError("output size must be at least 1x1")
    if not r.inside(img.width, img.height):
        raise RangeError(f"{r} is not inside a {img.width}x{img.height} image")
    xs = _sample_coords(r.x, r.w, out_w)
    ys = _sample_coords(r.y, r.h, out_h)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, r.x + r.w - 1)
    y1 = np.minimum(y0 + 1, r.y + r.h - 1)
    fx = (xs - x0)[None, :]
    fy = (ys - y0)[:, None]
    d = img.data
    # lerp form a + (b - a) * t keeps constant fields exact
    top = d[y0][:, x0] + (d[y0][:, x1] - d[y0][:, x0]) * fx
    bot = d[y1][:, x0] + (d[y1][:, x1] - d[y1][:, x0]) * fx
    out = top + (bot - top) * fy
    return GrayImage(np.clip(out, 0.0, 1.0))
