from ._kernels import backend
from .layers import (
    FeatureMaps,
    GaborFilter,
    PatchPrototype,
    build_gabor_bank,
    c1,
    c1_of,
    c2_dissimilarity,
    default_bank,
    extract_prototypes,
    s1,
    s2_c2,
)
from .params import GaborParams, PoolingTable

__all__ = [
    "FeatureMaps", "GaborFilter", "GaborParams", "PatchPrototype", "PoolingTable",
    "backend", "build_gabor_bank", "c1", "c1_of", "c2_dissimilarity", "default_bank",
    "extract_prototypes", "s1", "s2_c2",
]
