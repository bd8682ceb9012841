"""S1 -> C1 -> S2 -> C2 feature hierarchy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParamError, ShapeError, SizeError
from ..imaging import GrayImage
from . import _kernels
from .params import PROTOTYPE_SIZES, PROTOTYPES_PER_SIZE, GaborParams, PoolingTable


@dataclass(frozen=True)
class GaborFilter:
    size: int
    orientation: float  # degrees
    weights: np.ndarray


@dataclass(frozen=True, eq=False)
class FeatureMaps:
    """Responses of one layer.

    ``bands[b]`` is an array of shape ``(height, width, channels)``; for S1 a
    band is one filter size, for C1 one pooled scale pair, and channels are
    orientations.
    """

    layer: str
    bands: tuple
    labels: tuple = ()

    @property
    def depth(self) -> int:
        return self.bands[0].shape[2]


@dataclass(frozen=True, eq=False)
class PatchPrototype:
    """A ``size x size x depth`` window of C1 responses used as an S2 template.

    ``band``, ``row`` and ``col`` record where the window was cut from.
    """

    size: int
    depth: int
    weights: np.ndarray
    band: int = 0
    row: int = 0
    col: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (self.size, self.size, self.depth):
            raise ShapeError(f"prototype weights have shape {w.shape}, expected "
                             f"{(self.size, self.size, self.depth)}")
        if not np.all(np.isfinite(w)):
            raise ShapeError("prototype weights must be finite")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __eq__(self, other):
        if not isinstance(other, PatchPrototype):
            return NotImplemented
        return (self.size, self.depth, self.band, self.row, self.col) == \
            (other.size, other.depth, other.band, other.row, other.col) and \
            bool(np.array_equal(self.weights, other.weights))

    __hash__ = None


def gabor(size: int, theta_deg: float, wavelength: float, sigma: float, gamma: float,
          normalize: bool = True) -> np.ndarray:
    """Single even-phase Gabor, made zero-mean and unit L2 norm."""
    r = size // 2
    y, x = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
    th = np.deg2rad(theta_deg)
    xr = x * np.cos(th) + y * np.sin(th)
    yr = -x * np.sin(th) + y * np.cos(th)
    g = np.exp(-(xr ** 2 + (gamma * yr) ** 2) / (2 * sigma ** 2)) * np.cos(2 * np.pi * xr / wavelength)
    g = g - g.mean()
    if normalize:
        g = g / np.sqrt((g * g).sum())
        # a second centring pass removes the residual mean left by the division
        g = g - g.mean()
        g = g / np.sqrt((g * g).sum())
    return g


def build_gabor_bank(p: GaborParams | None = None) -> list[GaborFilter]:
    """One filter per (size, orientation), ordered size-major."""
    p = p or GaborParams()
    bank = []
    for size in p.filter_sizes:
        lam, sigma, gamma = p.table[size]
        for th in p.orientations:
            bank.append(GaborFilter(size, th, gabor(size, th, lam, sigma, gamma, p.normalize)))
    return bank


def _bank_sizes(bank) -> list[int]:
    sizes = []
    for f in bank:
        if f.size not in sizes:
            sizes.append(f.size)
    return sizes


def s1(img: GrayImage | np.ndarray, bank: list[GaborFilter]) -> FeatureMaps:
    """Normalized cross-correlation magnitude ``|<patch, f>| / ||patch||`` at every
    valid position, one band per filter size."""
    data = img.data if isinstance(img, GrayImage) else np.asarray(img, dtype=np.float64)
    if not bank:
        raise ParamError("empty filter bank")
    kmax = max(f.size for f in bank)
    if data.shape[0] < kmax or data.shape[1] < kmax:
        raise SizeError(f"image {data.shape[1]}x{data.shape[0]} is smaller than the {kmax}px filter")
    bands, labels = [], []
    for size in _bank_sizes(bank):
        maps = [_kernels.s1_ncc(data, f.weights) for f in bank if f.size == size]
        bands.append(np.stack(maps, axis=-1))
        labels.append(size)
    return FeatureMaps("S1", tuple(bands), tuple(labels))


def _center_crop(m: np.ndarray, h: int, w: int) -> np.ndarray:
    dy = (m.shape[0] - h) // 2
    dx = (m.shape[1] - w) // 2
    return m[dy:dy + h, dx:dx + w]


def c1(s1_maps: FeatureMaps, pool: PoolingTable | None = None) -> FeatureMaps:
    """Max over each paired pair of S1 scales and over pool-size windows.

    Smaller-filter maps are centre-cropped to the larger filter's valid region
    before the scale max so both maps refer to the same image positions.
    """
    pool = pool or PoolingTable()
    by_size = dict(zip(s1_maps.labels, s1_maps.bands))
    bands = []
    for pair, size, stride in zip(pool.bands, pool.pool_size, pool.stride):
        missing = [s for s in pair if s not in by_size]
        if missing:
            raise ParamError(f"pooling table references S1 sizes {missing} not present")
        h = min(by_size[s].shape[0] for s in pair)
        w = min(by_size[s].shape[1] for s in pair)
        if h < size or w < size:
            raise SizeError(f"S1 map {w}x{h} is smaller than the {size}x{size} pooling window")
        merged = _center_crop(by_size[pair[0]], h, w)
        for s in pair[1:]:
            merged = np.maximum(merged, _center_crop(by_size[s], h, w))
        bands.append(_kernels.maxpool(merged, size, stride))
    return FeatureMaps("C1", tuple(bands), tuple(pool.bands))


def extract_prototypes(c1_maps: FeatureMaps, sizes=PROTOTYPE_SIZES, per_size: int = PROTOTYPES_PER_SIZE,
                       seed=0) -> list[PatchPrototype]:
    """Cut ``per_size`` windows of every size at seeded-uniform band/positions.

    ``seed`` is anything ``numpy.random.default_rng`` accepts.
    """
    rng = np.random.default_rng(seed)
    out = []
    if per_size <= 0:
        return out
    for size in sizes:
        fits = [b for b, m in enumerate(c1_maps.bands) if m.shape[0] >= size and m.shape[1] >= size]
        if not fits:
            raise SizeError(f"no C1 band is large enough for a {size}x{size} prototype")
        for _ in range(per_size):
            b = fits[int(rng.integers(len(fits)))]
            m = c1_maps.bands[b]
            r = int(rng.integers(m.shape[0] - size + 1))
            c = int(rng.integers(m.shape[1] - size + 1))
            out.append(PatchPrototype(size, m.shape[2], m[r:r + size, c:c + size, :], b, r, c))
    return out


def s2_c2(c1_maps: FeatureMaps, library: list[PatchPrototype], beta: float = 1.0) -> np.ndarray:
    """C2 vector: per prototype, the best Gaussian-RBF match over every band and
    position, ``exp(-beta * ||window - P||^2 / (size^2 * depth))``."""
    if not library:
        raise ParamError("prototype library is empty")
    if not beta > 0:
        raise ParamError(f"beta must be positive, got {beta}")
    out = np.empty(len(library))
    for k, p in enumerate(library):
        best = np.inf
        for m in c1_maps.bands:
            if m.shape[2] != p.depth:
                raise ShapeError(f"prototype depth {p.depth} does not match C1 depth {m.shape[2]}")
            if m.shape[0] < p.size or m.shape[1] < p.size:
                continue
            best = min(best, _kernels.s2_min_sqdist(m, p.weights))
        if not np.isfinite(best):
            raise SizeError(f"every C1 band is smaller than the {p.size}x{p.size} prototype")
        out[k] = np.exp(-beta * best / (p.size * p.size * p.depth))
    return out


def c2_dissimilarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"C2 vectors must have equal 1-D shapes, got {a.shape} and {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def c1_of(img: GrayImage, bank=None, pool=None) -> FeatureMaps:
    """Convenience: S1 followed by C1."""
    return c1(s1(img, bank if bank is not None else default_bank()), pool)


_DEFAULT_BANK = None


def default_bank() -> list[GaborFilter]:
    global _DEFAULT_BANK
    if _DEFAULT_BANK is None:
        _DEFAULT_BANK = build_gabor_bank()
    return _DEFAULT_BANK
