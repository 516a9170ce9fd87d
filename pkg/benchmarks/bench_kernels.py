#!/usr/bin/env python3
"""Benchmark the numba scatter-add kernel against the numpy fallback.

The scatter-add is the non-BLAS hot spot of message passing (edge messages
summed per atom, every iteration, forward and backward).  Run:

    python benchmarks/bench_kernels.py

Set ``MOLTREE_NUMBA=0`` to check which path the package itself selects.
"""

from __future__ import annotations

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from moltree import kernels  # noqa: E402


def bench(fn, out, idx, src, repeats: int) -> float:
    fn(out, idx, src)  # warm up (numba compiles here)
    best = float("inf")
    for _ in range(repeats):
        out[:] = 0.0
        t0 = time.perf_counter()
        fn(out, idx, src)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    rng = np.random.default_rng(0)
    print(f"package backend: {kernels.backend_name()}")
    if kernels.scatter_add_rows_numba is None:
        print("numba unavailable; benchmarking the numpy path only")
    header = f"{'rows':>8} {'width':>6} {'numpy':>12} {'numba':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for rows, width in [(100, 16), (1_000, 64), (10_000, 64),
                        (10_000, 450), (100_000, 450)]:
        src = rng.standard_normal((rows, width))
        idx = rng.integers(0, max(rows // 4, 1), size=rows)
        out = np.zeros((max(rows // 4, 1), width))
        t_np = bench(kernels.scatter_add_rows_numpy, out, idx, src, 5)
        ref = out.copy()
        if kernels.scatter_add_rows_numba is not None:
            t_nb = bench(kernels.scatter_add_rows_numba, out, idx, src, 5)
            assert np.array_equal(out, ref), "backends disagree"
            print(f"{rows:>8} {width:>6} {t_np * 1e3:>10.3f}ms "
                  f"{t_nb * 1e3:>10.3f}ms {t_np / t_nb:>7.1f}x")
        else:
            print(f"{rows:>8} {width:>6} {t_np * 1e3:>10.3f}ms {'-':>12} {'-':>8}")


if __name__ == "__main__":
    main()
