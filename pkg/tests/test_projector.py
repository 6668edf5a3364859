import time

import numpy as np
import pytest

from conftest import disk
from sctk.core import SpectralImage
from sctk.projector import (ScanGeometry, back_project, back_stack, default_num_bins, forward_project,
                            operator_norm, parallel_geometry, spectral_back, spectral_forward, system_matrix)


def bilinear(img, x, y):
    """Hat-basis interpolation of pixel values (zero outside the grid)."""
    n = img.shape[0]
    u = x + (n - 1) / 2
    r = (n - 1) / 2 - y
    out = np.zeros_like(x)
    i0 = np.floor(r).astype(int)
    j0 = np.floor(u).astype(int)
    for di in (0, 1):
        for dj in (0, 1):
            i, j = i0 + di, j0 + dj
            w = np.clip(1 - np.abs(r - i), 0, None) * np.clip(1 - np.abs(u - j), 0, None)
            ok = (i >= 0) & (i < n) & (j >= 0) & (j < n)
            out[ok] += w[ok] * img[i[ok], j[ok]]
    return out


def march_sinogram(img, geo, step=0.01):
    n = geo.image_size
    t = np.arange(-n, n, step) + step / 2
    bins = (np.arange(geo.num_bins) - (geo.num_bins - 1) / 2) * geo.detector_spacing
    out = np.zeros((geo.num_views, geo.num_bins))
    for v, theta in enumerate(geo.angles_rad):
        c, s = np.cos(theta), np.sin(theta)
        for d, b in enumerate(bins):
            x = b * c - t * s
            y = b * s + t * c
            out[v, d] = bilinear(img, x, y).sum() * step * geo.pixel_size_cm
    return out


def test_default_bins_cover_diagonal():
    for n in (8, 32, 64, 96):
        assert default_num_bins(n) >= n * np.sqrt(2)
    assert default_num_bins(32) == 47


def test_zero_image(geo32_9):
    assert np.all(forward_project(np.zeros((32, 32)), geo32_9) == 0)
    assert np.all(back_project(np.zeros((9, geo32_9.num_bins)), geo32_9) == 0)


def test_disk_center_chord():
    geo = parallel_geometry(64, 12)
    sino = forward_project(disk(64, 10), geo)
    center = sino.max(axis=1)
    np.testing.assert_allclose(center, 2.0, rtol=0.02)


def test_matches_ray_marching_oracle(rng):
    geo = parallel_geometry(16, 4)
    img = rng.random((16, 16))
    ours = forward_project(img, geo)
    ref = march_sinogram(img, geo)
    big = ref > 1e-3 * ref.max()
    assert np.all(np.abs(ours[~big] - ref[~big]) < 1e-6)
    assert np.max(np.abs(ours[big] - ref[big]) / ref[big]) < 1e-3


def test_backprojection_impulse_is_ray_footprint():
    geo = parallel_geometry(10, 3)
    n = geo.image_size
    footprint = np.zeros((geo.num_views, geo.num_bins, n, n))
    for i in range(n):
        for j in range(n):
            e = np.zeros((n, n))
            e[i, j] = 1.0
            footprint[:, :, i, j] = forward_project(e, geo)
    for v, d in [(0, 7), (1, 3), (2, 8)]:
        y = np.zeros((geo.num_views, geo.num_bins))
        y[v, d] = 1.0
        np.testing.assert_array_equal(back_project(y, geo), footprint[v, d])


def test_adjoint_identity(geo32_9, rng):
    for _ in range(10):
        x = rng.standard_normal((32, 32))
        y = rng.standard_normal((9, geo32_9.num_bins))
        ax = forward_project(x, geo32_9)
        lhs, rhs = np.vdot(ax, y), np.vdot(x, back_project(y, geo32_9))
        assert abs(lhs - rhs) / (np.linalg.norm(ax) * np.linalg.norm(y)) < 1e-10


def test_linearity(geo32_9, rng):
    x, y = rng.standard_normal((2, 32, 32))
    a, b = 1.7, -0.3
    lhs = forward_project(a * x + b * y, geo32_9)
    rhs = a * forward_project(x, geo32_9) + b * forward_project(y, geo32_9)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_rotation_consistency():
    geo = parallel_geometry(48, 37)
    c = np.arange(48) - 23.5
    x, y = np.meshgrid(c, -c)
    blob = np.exp(-(x ** 2 + y ** 2) / (2 * 6.0 ** 2))
    sino = forward_project(blob, geo)
    ref = sino[0]
    assert np.max(np.abs(sino - ref)) / ref.max() < 0.01


def test_size_mismatch_raises(geo32_9):
    with pytest.raises(ValueError):
        forward_project(np.zeros((31, 31)), geo32_9)
    with pytest.raises(ValueError):
        back_project(np.zeros((8, geo32_9.num_bins)), geo32_9)


def test_spectral_single_channel_reduces(geo32_9, rng):
    img = rng.random((1, 32, 32))
    sino = spectral_forward(SpectralImage(img), geo32_9)
    np.testing.assert_array_equal(sino.data[0], forward_project(img[0], geo32_9))
    back = spectral_back(sino, geo32_9)
    np.testing.assert_array_equal(back.data[0], back_project(sino.data[0], geo32_9))


def test_spectral_channel_permutation(geo32_9, rng):
    img = rng.random((5, 32, 32))
    perm = np.array([3, 0, 4, 1, 2])
    a = spectral_forward(SpectralImage(img), geo32_9).data
    b = spectral_forward(SpectralImage(img[perm]), geo32_9).data
    np.testing.assert_allclose(b, a[perm], rtol=0, atol=1e-13)
    y = rng.random((5, 9, geo32_9.num_bins))
    np.testing.assert_allclose(back_stack(y[perm], geo32_9), back_stack(y, geo32_9)[perm], rtol=0, atol=1e-13)


def _median_time(fn, reps=5):
    times = []
    for _ in range(reps):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return float(np.median(times))


def test_spectral_runtime_scales_linearly(rng):
    geo = parallel_geometry(64, 74)
    system_matrix(geo)
    one = SpectralImage(rng.random((1, 64, 64)))
    many = SpectralImage(rng.random((32, 64, 64)))
    t1 = _median_time(lambda: spectral_forward(one, geo))
    t32 = _median_time(lambda: spectral_forward(many, geo))
    assert t32 <= 40 * t1


def test_operator_norm_disjoint_rays():
    # one axis-aligned view with bins on pixel centers: each ray sums one column,
    # so A^T A = p^2 N I and ||A|| = p sqrt(N)
    n = 12
    geo = ScanGeometry(n, (0.0,), n, 1.0, 0.1)
    a = system_matrix(geo).toarray()
    assert np.count_nonzero(a) == n * n
    assert operator_norm(geo, 10) == pytest.approx(0.1 * np.sqrt(n), abs=1e-6)


def test_operator_norm_monotone(geo32_9):
    est = [operator_norm(geo32_9, k, seed=3) for k in range(10, 101, 10)]
    assert all(b >= a - 1e-12 for a, b in zip(est, est[1:]))


def test_operator_norm_matches_dense_svd(geo32_9):
    dense = system_matrix(geo32_9).toarray()
    top = np.linalg.svd(dense, compute_uv=False)[0]
    assert operator_norm(geo32_9, 100) == pytest.approx(top, rel=0.005)


def test_operator_norm_needs_iterations(geo32_9):
    with pytest.raises(ValueError):
        operator_norm(geo32_9, 5)
