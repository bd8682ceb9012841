"""Deterministic schematic faces with exact 68-point landmarks.

Each identity is a set of geometry multipliers (eye size, nose width, ...).
Every rendered sample jitters those multipliers, the head position and the
pixel noise with its own seed, so samples of one identity share their shape
while different identities differ in the multipliers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from .errors import MemHmaxIOError, ParamError
from .imaging import GrayImage, LandmarkSet, save_png, write_landmarks

GEOMETRY_KEYS = (
    "eye_scale", "eye_aspect", "eye_spacing", "brow_gap",
    "nose_width", "nose_length",
    "mouth_scale", "mouth_width", "mouth_height", "philtrum",
    "face_width",
)

_SUPERSAMPLE = 4


@dataclass(frozen=True)
class SyntheticFaceSpec:
    id: int
    name: str
    seed: int
    geometry: dict = field(default_factory=dict)
    n_memory: int = 8
    n_test: int = 3
    image_size: int = 128
    jitter: float = 0.03
    shift: float = 2.0
    noise: float = 0.02

    def __post_init__(self):
        unknown = set(self.geometry) - set(GEOMETRY_KEYS)
        if unknown:
            raise ParamError(f"unknown geometry multipliers {sorted(unknown)}")
        if any(not (v > 0) for v in self.geometry.values()):
            raise ParamError("geometry multipliers must be > 0")
        if self.image_size < 64:
            raise ParamError("image_size must be at least 64")
        if self.n_memory < 0 or self.n_test < 0:
            raise ParamError("sample counts must be >= 0")

    def multiplier(self, key: str) -> float:
        return float(self.geometry.get(key, 1.0))


def _ellipse_pt(cx, cy, a, b, deg):
    t = math.radians(deg)
    return (cx + a * math.cos(t), cy - b * math.sin(t))


def face_layout(geom: dict, size: int, dx: float = 0.0, dy: float = 0.0) -> dict:
    """Shape parameters and the 68 landmarks for one face.

    ``geom`` maps multiplier names to values (missing ones are 1.0).
    """
    g = {k: float(geom.get(k, 1.0)) for k in GEOMETRY_KEYS}
    u = size / 128.0
    cx, cy = size / 2.0 + dx, size / 2.0 + dy

    face_a = 42 * u * g["face_width"]
    face_b = 56 * u
    face_c = (cx, cy + 2 * u)

    ey = cy - 12 * u
    sep = 19 * u * g["eye_spacing"]
    ea = 7.5 * u * g["eye_scale"]
    eb = 3.6 * u * g["eye_scale"] * g["eye_aspect"]
    brow_y = ey - eb - 5 * u * g["brow_gap"]

    nose_top = ey
    nose_base = ey + 20 * u * g["nose_length"]
    nw = 7 * u * g["nose_width"]

    ml = 12 * u * g["mouth_scale"] * g["mouth_width"]
    mh = 3.5 * u * g["mouth_scale"] * g["mouth_height"]
    my = nose_base + 7 * u * g["philtrum"] + mh

    pts = []
    # jaw 0-16: lower half-ellipse from the subject's right ear over the chin
    jaw_cy = ey + 2 * u
    jaw_b = face_c[1] + face_b - jaw_cy
    for k in range(17):
        t = math.pi - k * math.pi / 16
        pts.append((face_c[0] + face_a * math.cos(t), jaw_cy + jaw_b * math.sin(t)))
    # brows 17-21 (subject's right, image left) and 22-26
    for ex, sign in ((cx - sep, 1), (cx + sep, -1)):
        xs = [ex - sign * ea * f for f in (1.1, 0.55, 0.0, -0.55, -1.1)]
        for k, x in enumerate(xs):
            arch = 1.5 * u * math.sin(math.pi * k / 4)
            pts.append((x, brow_y - arch))
    # nose bridge 27-30, lower nose 31-35
    for k in range(4):
        pts.append((cx, nose_top + (nose_base - 3 * u - nose_top) * k / 3))
    for f in (-1.0, -0.5, 0.0, 0.5, 1.0):
        pts.append((cx + f * nw, nose_base + (1.0 * u if f == 0.0 else 0.0)))
    # right eye 36-41 (outer corner first), left eye 42-47 (inner corner first)
    ex = cx - sep
    for deg in (180, 120, 60, 0, -60, -120):
        pts.append(_ellipse_pt(ex, ey, ea, eb, deg))
    ex = cx + sep
    for deg in (180, 120, 60, 0, -60, -120):
        pts.append(_ellipse_pt(ex, ey, ea, eb, deg))
    # outer lip 48-59, inner lip 60-67
    top, bot = my - mh, my + mh
    pts.append((cx - ml, my))
    for f in (-2 / 3, -1 / 3, 0.0, 1 / 3, 2 / 3):
        pts.append((cx + f * ml, top))
    pts.append((cx + ml, my))
    for f in (2 / 3, 1 / 3, 0.0, -1 / 3, -2 / 3):
        pts.append((cx + f * ml, bot))
    il = 0.8 * ml
    pts.append((cx - il, my))
    for f in (-0.5, 0.0, 0.5):
        pts.append((cx + f * il, my - 0.3 * mh))
    pts.append((cx + il, my))
    for f in (0.5, 0.0, -0.5):
        pts.append((cx + f * il, my + 0.3 * mh))
    return {
        "points": np.array(pts),
        "face": (face_c, face_a, face_b),
        "eyes": ((cx - sep, ey), (cx + sep, ey), ea, eb),
        "nose": (nose_top, nose_base, nw, cx),
        "mouth": (cx, my, ml, mh),
    }


def render_face(layout: dict, size: int, rng: np.random.Generator, noise: float = 0.02) -> GrayImage:
    s = _SUPERSAMPLE
    im = Image.new("F", (size * s, size * s), 0.15)
    dr = ImageDraw.Draw(im)

    def box(cx, cy, a, b):
        return [(cx - a) * s, (cy - b) * s, (cx + a) * s, (cy + b) * s]

    (fcx, fcy), fa, fb = layout["face"]
    dr.ellipse(box(fcx, fcy, fa, fb), fill=0.62)

    pts = layout["points"]
    for lo in (17, 22):
        line = [(x * s, y * s) for x, y in pts[lo:lo + 5]]
        dr.line(line, fill=0.18, width=max(1, int(2.2 * s)))

    (rx, ry), (lx, ly), ea, eb = layout["eyes"]
    for ex, ey in ((rx, ry), (lx, ly)):
        dr.ellipse(box(ex, ey, ea, eb), fill=0.95)
        r = 0.75 * min(ea, eb) + 0.6
        dr.ellipse(box(ex, ey, r, r), fill=0.08)

    nose_top, nose_base, nw, ncx = layout["nose"]
    dr.polygon([(ncx * s, nose_top * s), ((ncx - nw) * s, nose_base * s), ((ncx + nw) * s, nose_base * s)],
               fill=0.48, outline=0.3)

    mcx, my, ml, mh = layout["mouth"]
    dr.rectangle(box(mcx, my, ml, mh), fill=0.3)
    dr.line([((mcx - 0.8 * ml) * s, my * s), ((mcx + 0.8 * ml) * s, my * s)], fill=0.08,
            width=max(1, int(1.2 * s)))

    a = np.asarray(im, dtype=np.float64).reshape(size, s, size, s).mean(axis=(1, 3))
    if noise > 0:
        a = a + rng.normal(0.0, noise, a.shape)
    return GrayImage(np.clip(a, 0.0, 1.0))


def render_sample(spec: SyntheticFaceSpec, index: int) -> tuple:
    """Render sample ``index`` of ``spec``; returns ``(GrayImage, LandmarkSet)``."""
    rng = np.random.default_rng([spec.seed, spec.id, index])
    geom = {k: spec.multiplier(k) * float(np.exp(rng.normal(0.0, spec.jitter))) for k in GEOMETRY_KEYS}
    dx, dy = rng.uniform(-spec.shift, spec.shift, 2)
    layout = face_layout(geom, spec.image_size, dx, dy)
    img = render_face(layout, spec.image_size, rng, spec.noise)
    pts = np.clip(layout["points"], 0.0, spec.image_size - 1.0)
    return img, LandmarkSet(pts)


MANIFEST_HEADER = ("id", "name", "image", "landmarks", "split")


def gen_synthetic(specs, out_dir) -> Path:
    """Write PNG images, ``.pts`` files and ``manifest.csv``; returns the manifest path."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise MemHmaxIOError(f"cannot create {out}: {exc}") from exc
    rows = []
    for spec in specs:
        index = 0
        for split, n in (("memory", spec.n_memory), ("test", spec.n_test)):
            for _ in range(n):
                img, lm = render_sample(spec, index)
                stem = f"id{spec.id:03d}_{index:02d}"
                save_png(img, out / f"{stem}.png")
                write_landmarks(lm, out / f"{stem}.pts")
                rows.append((spec.id, spec.name, f"{stem}.png", f"{stem}.pts", split))
                index += 1
    manifest = out / "manifest.csv"
    try:
        with manifest.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(MANIFEST_HEADER)
            w.writerows(rows)
    except OSError as exc:
        raise MemHmaxIOError(f"cannot write {manifest}: {exc}") from exc
    return manifest


def benchmark_specs(seed: int = 7) -> list:
    """Five known identities (8 memory + 3 test images) and two unknown ones (3 test)."""
    known = [
        (1, "big-mouth", {"mouth_scale": 1.35, "mouth_width": 1.1}),
        (2, "wide-nose", {"nose_width": 1.45}),
        (3, "big-eyes", {"eye_scale": 1.35}),
        (4, "long-philtrum", {"philtrum": 1.8, "mouth_height": 0.8}),
        (5, "narrow-eyes", {"eye_aspect": 0.6, "brow_gap": 1.4}),
    ]
    unknown = [
        (6, "small-mouth", {"mouth_scale": 0.65}),
        (7, "small-eyes", {"eye_scale": 0.65}),
    ]
    specs = [SyntheticFaceSpec(i, n, seed, g, n_memory=8, n_test=3) for i, n, g in known]
    specs += [SyntheticFaceSpec(i, n, seed, g, n_memory=0, n_test=3) for i, n, g in unknown]
    return specs


def specs_from_json(doc) -> list:
    """Build specs from a list of dicts with SyntheticFaceSpec field names."""
    if not isinstance(doc, list):
        raise ParamError("spec file must hold a JSON list")
    out = []
    for k, d in enumerate(doc):
        if not isinstance(d, dict):
            raise ParamError(f"spec {k} is not an object")
        try:
            out.append(SyntheticFaceSpec(**d))
        except TypeError as exc:
            raise ParamError(f"spec {k}: {exc}") from exc
    return out
