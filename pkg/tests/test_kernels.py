"""The numba kernels and their vectorized NumPy fallbacks must agree."""

import numpy as np
import pytest

import microfuse.kernels as K
from microfuse.accel import USE_NUMBA

pytestmark = pytest.mark.skipif(not USE_NUMBA, reason="numba path inactive")

RNG = np.random.default_rng(42)


def test_bilinear_paths_agree():
    img = RNG.random((30, 40))
    rows = RNG.uniform(-2, 32, 500)
    cols = RNG.uniform(-2, 42, 500)
    for edge in (0.0, 0.5):
        a = K._bilinear_numba(img, rows, cols, -1.0, edge)
        b = K._bilinear_numpy(img, rows, cols, -1.0, edge)
        assert np.array_equal(a, b)


def test_bilinear_grad_paths_agree():
    img = RNG.random((30, 40))
    rows = RNG.uniform(-1, 31, 400)
    cols = RNG.uniform(-1, 41, 400)
    for a, b in zip(K._bilinear_grad_numba(img, rows, cols, 0.0),
                    K._bilinear_grad_numpy(img, rows, cols, 0.0)):
        assert np.array_equal(a, b)


def test_nearest_paths_agree():
    img = RNG.integers(0, 5, size=(20, 25)).astype(np.uint8)
    rows = RNG.uniform(-2, 22, 300)
    cols = RNG.uniform(-2, 27, 300)
    a = K._nearest_numba(img, rows, cols, np.uint8(0))
    b = K._nearest_numpy(img, rows, cols, np.uint8(0))
    assert np.array_equal(a, b)


def test_fill_volume_paths_agree():
    frames = RNG.random((9, 16, 12)).astype(np.float32)
    angles = np.sort(RNG.uniform(-80, 80, 9))
    args = (frames, angles, 4.0, 0.5, 0.7, 1.0, 30, 15, 8, 25.0)
    for nearest in (False, True):
        a = K._fill_volume_numba(*args, True, nearest)
        b = K._fill_volume_numpy(*args, True, nearest)
        assert np.array_equal(a, b)


def test_sample_fan_paths_agree():
    vol = RNG.random((24, 12, 8)).astype(np.float32)
    angles = np.linspace(-70, 70, 11)
    args = (vol, 0.5, 0.5, 1.0, -6.0, 0.0, 0.0, angles, 2.0, 10, 8, 0.5, True)
    a = K._sample_fan_numba(*args)
    b = K._sample_fan_numpy(*args)
    assert np.array_equal(a, b)


def test_parzen_hist_paths_agree():
    n = 4000
    fixed_bin = RNG.integers(0, 32, n)
    tm = RNG.uniform(1.0, 29.0 - 1e-9, n)
    a = K._parzen_hist_numba(fixed_bin, tm, 32)
    b = K._parzen_hist_numpy(fixed_bin, tm, 32)
    assert np.allclose(a, b, atol=1e-12)
    # partition of unity: total mass equals the sample count
    assert abs(a.sum() - n) < 1e-9


def test_parzen_terms_paths_agree():
    n = 2000
    fixed_bin = RNG.integers(0, 32, n)
    tm = RNG.uniform(1.0, 29.0 - 1e-9, n)
    table = RNG.normal(size=(32, 32))
    a = K._parzen_terms_numba(fixed_bin, tm, table)
    b = K._parzen_terms_numpy(fixed_bin, tm, table)
    assert np.allclose(a, b, atol=1e-12)


def test_ffd_disp_paths_agree():
    coef_x = RNG.normal(size=(9, 11))
    coef_y = RNG.normal(size=(9, 11))
    tx = RNG.uniform(-2, 12, 600)
    ty = RNG.uniform(-2, 10, 600)
    ax, ay = K._ffd_disp_numba(tx, ty, coef_x, coef_y)
    bx, by = K._ffd_disp_numpy(tx, ty, coef_x, coef_y)
    assert np.allclose(ax, bx, atol=1e-14)
    assert np.allclose(ay, by, atol=1e-14)


def test_ffd_scatter_paths_agree():
    tx = RNG.uniform(-2, 12, 600)
    ty = RNG.uniform(-2, 10, 600)
    beta_x = RNG.normal(size=600)
    beta_y = RNG.normal(size=600)
    ax, ay = K._ffd_scatter_numba(tx, ty, beta_x, beta_y, 11, 9)
    bx, by = K._ffd_scatter_numpy(tx, ty, beta_x, beta_y, 11, 9)
    assert np.allclose(ax, bx, atol=1e-12)
    assert np.allclose(ay, by, atol=1e-12)
