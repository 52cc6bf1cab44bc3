#!/usr/bin/env python3
"""Times the compiled clustering kernel against the pure-NumPy fallback.

The merge loop dominates pipeline runtime once traces reach a few thousand
samples, which is why it has a compiled implementation at all.  Run after an
editable install:

    python benchmarks/bench_clustering.py
    python benchmarks/bench_clustering.py --sizes 500 1000 2000 --dims 32

Parity (bit-identical merge lists) is asserted on every measurement.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from huretex import _agglo_py
from huretex.clustering import _pairwise_matrix
from huretex.rng import SplitMix64

try:
    from huretex import _agglo_cy
except ImportError:
    _agglo_cy = None


def blobs(rng: SplitMix64, n: int, dim: int, groups: int = 8) -> np.ndarray:
    X = np.empty((n, dim))
    for i in range(n):
        g = i % groups
        X[i] = [10.0 * g + rng.gauss() for _ in range(dim)]
    return X


def timed(fn, *args) -> tuple[float, object]:
    t0 = time.perf_counter()
    out = fn(*args)
    return time.perf_counter() - t0, out


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[200, 500, 1000, 2000])
    parser.add_argument("--dims", type=int, nargs="+", default=[8, 32])
    parser.add_argument("--linkage", default="ward",
                        choices=["ward", "average", "complete", "single"])
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if _agglo_cy is None:
        print("compiled kernel unavailable; timing the fallback only")
    print(f"linkage={args.linkage}")
    print(f"{'n':>6} {'dim':>5} {'python':>10} {'compiled':>10} {'speedup':>8}")
    rng = SplitMix64(args.seed)
    for dim in args.dims:
        for n in args.sizes:
            X = blobs(rng, n, dim)
            D = _pairwise_matrix(X, args.linkage == "ward")
            t_py, m_py = timed(_agglo_py.linkage_merges, D.copy(), args.linkage)
            if _agglo_cy is None:
                print(f"{n:>6} {dim:>5} {t_py:>9.3f}s {'-':>10} {'-':>8}")
                continue
            t_cy, m_cy = timed(_agglo_cy.linkage_merges, D.copy(), args.linkage)
            assert m_py == m_cy, "backend results diverged"
            print(f"{n:>6} {dim:>5} {t_py:>9.3f}s {t_cy:>9.3f}s {t_py / t_cy:>7.1f}x")


if __name__ == "__main__":
    main()
