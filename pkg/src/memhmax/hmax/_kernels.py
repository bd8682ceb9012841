"""Hot loops of the HMAX hierarchy.

Each kernel exists twice: a numba ``@njit`` version and a pure-numpy
version. Set ``MEMHMAX_DISABLE_NUMBA=1`` to force the numpy path (also used
automatically when numba cannot be imported). Both paths produce the same
values up to floating-point summation order.
"""

from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None
USE_NUMBA = NUMBA_AVAILABLE and os.environ.get("MEMHMAX_DISABLE_NUMBA", "0").lower() not in ("1", "true", "yes")


# ---------------------------------------------------------------------------
# numpy path

def s1_ncc_numpy(img: np.ndarray, filt: np.ndarray) -> np.ndarray:
    k = filt.shape[0]
    win = sliding_window_view(img, (k, k))
    dot = np.einsum("ijkl,kl->ij", win, filt)
    norm = np.sqrt(np.einsum("ijkl,ijkl->ij", win, win))
    out = np.zeros_like(dot)
    nz = norm > 0.0
    out[nz] = np.abs(dot[nz]) / norm[nz]
    return np.minimum(out, 1.0)


def maxpool_numpy(m: np.ndarray, size: int, stride: int) -> np.ndarray:
    # m: (h, w, depth)
    win = sliding_window_view(m, (size, size), axis=(0, 1))[::stride, ::stride]
    return win.max(axis=(-2, -1))


def s2_min_sqdist_numpy(c1: np.ndarray, proto: np.ndarray) -> float:
    # c1: (h, w, depth), proto: (s, s, depth)
    s = proto.shape[0]
    win = sliding_window_view(c1, (s, s), axis=(0, 1))  # (h', w', depth, s, s)
    diff = win - proto.transpose(2, 0, 1)
    return float((diff * diff).sum(axis=(2, 3, 4)).min())


# ---------------------------------------------------------------------------
# numba path

if NUMBA_AVAILABLE:

    @numba.njit(cache=True)
    def s1_ncc_numba(img, filt):
        k = filt.shape[0]
        h = img.shape[0] - k + 1
        w = img.shape[1] - k + 1
        out = np.zeros((h, w))
        for i in range(h):
            for j in range(w):
                dot = 0.0
                ss = 0.0
                for a in range(k):
                    for b in range(k):
                        v = img[i + a, j + b]
                        dot += v * filt[a, b]
                        ss += v * v
                if ss > 0.0:
                    r = abs(dot) / np.sqrt(ss)
                    out[i, j] = r if r < 1.0 else 1.0
        return out

    @numba.njit(cache=True)
    def maxpool_numba(m, size, stride):
        h = (m.shape[0] - size) // stride + 1
        w = (m.shape[1] - size) // stride + 1
        d = m.shape[2]
        out = np.empty((h, w, d))
        for i in range(h):
            for j in range(w):
                for c in range(d):
                    best = m[i * stride, j * stride, c]
                    for a in range(size):
                        for b in range(size):
                            v = m[i * stride + a, j * stride + b, c]
                            if v > best:
                                best = v
                    out[i, j, c] = best
        return out

    @numba.njit(cache=True)
    def s2_min_sqdist_numba(c1, proto):
        s = proto.shape[0]
        d = proto.shape[2]
        h = c1.shape[0] - s + 1
        w = c1.shape[1] - s + 1
        best = np.inf
        for i in range(h):
            for j in range(w):
                acc = 0.0
                for a in range(s):
                    for b in range(s):
                        for c in range(d):
                            t = c1[i + a, j + b, c] - proto[a, b, c]
                            acc += t * t
                    # rows are summed in a fixed order, so an early exit never
                    # changes the minimum that is eventually returned
                    if acc >= best:
                        break
                if acc < best:
                    best = acc
        return best

else:  # pragma: no cover
    s1_ncc_numba = maxpool_numba = s2_min_sqdist_numba = None


def s1_ncc(img: np.ndarray, filt: np.ndarray) -> np.ndarray:
    img = np.ascontiguousarray(img, dtype=np.float64)
    filt = np.ascontiguousarray(filt, dtype=np.float64)
    if USE_NUMBA:
        return s1_ncc_numba(img, filt)
    return s1_ncc_numpy(img, filt)


def maxpool(m: np.ndarray, size: int, stride: int) -> np.ndarray:
    m = np.ascontiguousarray(m, dtype=np.float64)
    if USE_NUMBA:
        return maxpool_numba(m, size, stride)
    return maxpool_numpy(m, size, stride)


def s2_min_sqdist(c1: np.ndarray, proto: np.ndarray) -> float:
    c1 = np.ascontiguousarray(c1, dtype=np.float64)
    proto = np.ascontiguousarray(proto, dtype=np.float64)
    if USE_NUMBA:
        return float(s2_min_sqdist_numba(c1, proto))
    return s2_min_sqdist_numpy(c1, proto)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
