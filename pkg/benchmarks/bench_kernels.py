"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel runs once untimed (numba compilation, or loading its on-disk
cache), then the best of ``--repeat`` runs is reported. A last row times one
full episodic-patch encoding (S1 -> C1 -> C2 against a 32-prototype library)
under each backend by switching the dispatch flag.
"""

import argparse
import timeit

import numpy as np

from memhmax.hmax import _kernels, c1_of, extract_prototypes, s2_c2
from memhmax.hmax import default_bank
from memhmax.imaging import GrayImage


def best(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.NUMBA_AVAILABLE:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(0)
    img = rng.random((64, 64))
    filt = default_bank()[-1].weights
    c1 = rng.random((14, 14, 4))
    proto = rng.random((6, 6, 4))
    s1_map = rng.random((52, 52, 4))

    cases = [
        ("s1 ncc 64x64, 13px filter", lambda: _kernels.s1_ncc_numpy(img, filt),
         lambda: _kernels.s1_ncc_numba(img, filt)),
        ("maxpool 52x52x4, 8/4", lambda: _kernels.maxpool_numpy(s1_map, 8, 4),
         lambda: _kernels.maxpool_numba(s1_map, 8, 4)),
        ("s2 min sqdist 14x14x4, 6px", lambda: _kernels.s2_min_sqdist_numpy(c1, proto),
         lambda: _kernels.s2_min_sqdist_numba(c1, proto)),
    ]

    patch = GrayImage(img)
    lib = extract_prototypes(c1_of(patch), (4, 6, 8, 10), 8, seed=0)

    def pipeline(use_numba):
        def run():
            saved = _kernels.USE_NUMBA
            _kernels.USE_NUMBA = use_numba
            try:
                s2_c2(c1_of(patch), lib, 1.0)
            finally:
                _kernels.USE_NUMBA = saved
        return run

    cases.append(("patch encoding, 32 prototypes", pipeline(False), pipeline(True)))

    print(f"{'kernel':<32} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name, np_fn, nb_fn in cases:
        t_np, t_nb = best(np_fn, args.repeat), best(nb_fn, args.repeat)
        print(f"{name:<32} {t_np * 1e3:>10.3f} {t_nb * 1e3:>10.3f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
