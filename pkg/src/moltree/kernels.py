"""Hot array kernels with a numba fast path and a pure-numpy fallback.

The message-passing layers spend their non-BLAS time gathering and
scatter-adding rows of edge-message matrices.  ``np.add.at`` is unbuffered
but slow; the numba loop is equivalent (same accumulation order, so results
are bit-identical) and much faster.

Set ``MOLTREE_NUMBA=0`` to force the numpy path; the numba path is the
default whenever numba imports.  ``benchmarks/bench_kernels.py`` compares
the two.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "NUMBA_ENABLED",
    "backend_name",
    "scatter_add_rows",
    "scatter_add_rows_numpy",
    "scatter_add_rows_numba",
    "segment_sum_rows",
]


def scatter_add_rows_numpy(out: np.ndarray, idx: np.ndarray, src: np.ndarray) -> None:
    """out[idx[i]] += src[i] for all i, in index order."""
    np.add.at(out, idx, src)


scatter_add_rows_numba = None

_want_numba = os.environ.get("MOLTREE_NUMBA", "1").lower() not in ("0", "false", "no")

if _want_numba:
    try:
        from numba import njit
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _want_numba = False

if _want_numba:

    @njit(cache=True)
    def _scatter_add_impl(out, idx, src):  # pragma: no cover - compiled
        for i in range(idx.shape[0]):
            row = idx[i]
            for j in range(src.shape[1]):
                out[row, j] += src[i, j]

    def scatter_add_rows_numba(out: np.ndarray, idx: np.ndarray, src: np.ndarray) -> None:
        _scatter_add_impl(out, idx, src)


NUMBA_ENABLED = _want_numba
scatter_add_rows = scatter_add_rows_numba if NUMBA_ENABLED else scatter_add_rows_numpy


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"


def segment_sum_rows(src: np.ndarray, seg: np.ndarray, n_segments: int) -> np.ndarray:
    """Sum rows of ``src`` into ``n_segments`` buckets given by ``seg``."""
    out = np.zeros((n_segments, src.shape[1]), dtype=src.dtype)
    scatter_add_rows(out, seg, src)
    return out
