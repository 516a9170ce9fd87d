import numpy as np

from moltree import kernels


def test_numpy_path_matches_manual_loop():
    rng = np.random.default_rng(0)
    src = rng.standard_normal((50, 7))
    idx = rng.integers(0, 10, size=50)
    out = np.zeros((10, 7))
    kernels.scatter_add_rows_numpy(out, idx, src)
    ref = np.zeros((10, 7))
    for i, row in enumerate(idx):
        ref[row] += src[i]
    assert np.allclose(out, ref)


def test_backends_bit_identical():
    if kernels.scatter_add_rows_numba is None:
        import pytest

        pytest.skip("numba unavailable")
    rng = np.random.default_rng(1)
    src = rng.standard_normal((500, 33))
    idx = rng.integers(0, 60, size=500)
    a = np.zeros((60, 33))
    b = np.zeros((60, 33))
    kernels.scatter_add_rows_numpy(a, idx, src)
    kernels.scatter_add_rows_numba(b, idx, src)
    assert np.array_equal(a, b)  # exact: same accumulation order


def test_segment_sum_rows():
    src = np.arange(12, dtype=float).reshape(6, 2)
    seg = np.array([2, 0, 2, 1, 0, 2])
    out = kernels.segment_sum_rows(src, seg, 3)
    assert out.shape == (3, 2)
    assert np.array_equal(out[0], src[1] + src[4])
    assert np.array_equal(out[1], src[3])
    assert np.array_equal(out[2], src[0] + src[2] + src[5])


def test_env_flag_selects_backend():
    import subprocess
    import sys

    code = "from moltree import kernels; print(kernels.backend_name())"
    out = subprocess.run(
        [sys.executable, "-c", code],
        capture_output=True, text=True,
        env={"MOLTREE_NUMBA": "0", "PATH": "/usr/bin:/bin"},
    )
    assert out.stdout.strip() == "numpy"
