"""Fixed HMAX front-end constants.

Gabor parameters for the four smallest standard HMAX filter sizes at 4
orientations, plus the C1 pooling layout. These values are versioned with
the store schema: changing them invalidates stored prototypes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ParamError

ORIENTATIONS_DEG = (0.0, 45.0, 90.0, 135.0)

# filter size -> (wavelength, effective width sigma, aspect ratio gamma)
GABOR_TABLE = {
    7: (3.5, 2.8, 0.3),
    9: (4.6, 3.6, 0.3),
    11: (5.6, 4.5, 0.3),
    13: (6.8, 5.4, 0.3),
}

# C1 bands pair adjacent filter sizes; each band pools 8x8 cells with stride 4
C1_BANDS = ((7, 9), (11, 13))
C1_POOL_SIZE = 8
C1_POOL_STRIDE = 4

PROTOTYPE_SIZES = (4, 6, 8, 10)
PROTOTYPES_PER_SIZE = 8

# episodic patches are resampled to this raster before entering S1
PATCH_WIDTH = 64
PATCH_HEIGHT = 64


@dataclass(frozen=True)
class GaborParams:
    orientations: tuple = ORIENTATIONS_DEG
    filter_sizes: tuple = (7, 9, 11, 13)
    table: dict = field(default_factory=lambda: dict(GABOR_TABLE))
    normalize: bool = True

    def __post_init__(self):
        if not self.orientations:
            raise ParamError("at least one orientation is required")
        if not self.filter_sizes:
            raise ParamError("at least one filter size is required")
        for s in self.filter_sizes:
            if s < 3 or s % 2 == 0:
                raise ParamError(f"filter sizes must be odd and >= 3, got {s}")
            if s not in self.table:
                raise ParamError(f"no Gabor table entry for filter size {s}")


@dataclass(frozen=True)
class PoolingTable:
    """Per-band C1 pooling: which S1 sizes are merged and the spatial window."""

    bands: tuple = C1_BANDS
    pool_size: tuple = (C1_POOL_SIZE, C1_POOL_SIZE)
    stride: tuple = (C1_POOL_STRIDE, C1_POOL_STRIDE)

    def __post_init__(self):
        if not (len(self.bands) == len(self.pool_size) == len(self.stride)):
            raise ParamError("pooling table rows must align")
        if any(p < 1 for p in self.pool_size) or any(s < 1 for s in self.stride):
            raise ParamError("pool size and stride must be >= 1")
