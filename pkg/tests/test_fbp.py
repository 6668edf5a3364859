import numpy as np
import pytest

from conftest import disk, smooth_image
from sctk.core import EnergyGrid, SpectralSinogram
from sctk.fbp import FilterConfig, fbp_reconstruct, fbp_stack, filter_sinogram, ram_lak_kernel, ramp_response
from sctk.iterative import art_tv_stack
from sctk.phantom import build_material_library, rasterize, sample_scene
from sctk.projector import ScanGeometry, back_stack, forward_stack, full_circle_angles, parallel_geometry


def rmse(a, b):
    return float(np.sqrt(np.mean((a - b) ** 2)))


def test_zero_in_zero_out():
    assert np.all(filter_sinogram(np.zeros((3, 47))) == 0)
    geo = parallel_geometry(16, 6)
    assert np.all(fbp_stack(np.zeros((2, 6, geo.num_bins)), geo) == 0)


def test_ramp_has_no_dc_gain():
    # zero-padded FFT of the spatial kernel leaves a leak of order 1/(pi^2 L)
    resp = ramp_response(92)
    assert abs(resp[0]) < 1e-3
    assert resp[-1] == pytest.approx(0.5, rel=1e-2)


def test_impulse_gives_ram_lak_taps():
    d = 47
    row = np.zeros(d)
    row[20] = 1.0
    out = filter_sinogram(row)
    k = np.arange(d) - 20
    expected = np.where(k == 0, 0.25, np.where(k % 2 != 0, -1.0 / (np.pi * np.where(k == 0, 1, k)) ** 2, 0.0))
    np.testing.assert_allclose(out, expected, atol=1e-6)


def test_kernel_taps():
    h = ram_lak_kernel(16)
    assert h[0] == 0.25
    assert h[1] == pytest.approx(-1 / np.pi ** 2)
    assert h[2] == 0.0
    assert h[-3] == pytest.approx(-1 / (9 * np.pi ** 2))


def test_hann_is_weaker_at_high_frequency():
    r = ramp_response(64, FilterConfig("hann"))
    assert abs(r[-1]) < 1e-12
    assert np.all(r <= ramp_response(64) + 1e-15)


def test_filter_config_validation():
    with pytest.raises(ValueError):
        FilterConfig(zero_pad_factor=1)
    with pytest.raises(ValueError):
        FilterConfig(kind="shepp")


def test_dense_view_disk():
    n = 64
    geo = parallel_geometry(n, 360)
    truth = disk(n, 20)
    rec = fbp_stack(forward_stack(truth[None], geo), geo)[0]
    interior = disk(n, 17) > 0
    assert rec[interior].mean() == pytest.approx(1.0, rel=0.05)
    assert rmse(rec[interior], truth[interior]) < 0.05


def test_fbp_reconstruct_checks_geometry():
    geo = parallel_geometry(16, 6)
    sino = SpectralSinogram(np.zeros((1, 5, geo.num_bins)), full_circle_angles(5))
    with pytest.raises(ValueError):
        fbp_reconstruct(sino, geo)


def test_linearity(rng):
    geo = parallel_geometry(24, 9)
    a, b = rng.standard_normal((2, 1, 9, geo.num_bins))
    lhs = fbp_stack(2 * a - 3 * b, geo)
    rhs = 2 * fbp_stack(a, geo) - 3 * fbp_stack(b, geo)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * np.abs(rhs).max())


def test_rmse_decreases_with_views(rng):
    n = 48
    truth = smooth_image(n, rng) * (disk(n, 20) > 0)
    errs = []
    for v in (9, 18, 36, 72, 180):
        geo = parallel_geometry(n, v)
        errs.append(rmse(fbp_stack(forward_stack(truth[None], geo), geo)[0], truth))
    assert all(b < a for a, b in zip(errs, errs[1:])), errs


def test_full_circle_equals_folded_half_circle(rng):
    n, v = 48, 72
    truth = smooth_image(n, rng) * (disk(n, 20) > 0)
    full = parallel_geometry(n, v)
    sino = forward_stack(truth[None], full)
    half = ScanGeometry(n, tuple(full.angles[: v // 2]), full.num_bins, 1.0, full.pixel_size_cm)
    folded = 0.5 * (sino[:, : v // 2] + sino[:, v // 2:, ::-1])
    a = fbp_stack(sino, full)[0]
    b = fbp_stack(folded, half)[0]
    assert rmse(a, b) < 0.01 * rmse(a, 0 * a)


def test_sparse_fbp_rougher_than_art_tv():
    grid = EnergyGrid.uniform(2)
    truth = rasterize(sample_scene(5, materials=build_material_library()), 48, grid).data
    geo = parallel_geometry(48, 9)
    sino = forward_stack(truth, geo)
    fbp = fbp_stack(sino, geo)
    art = art_tv_stack(sino, geo)
    from sctk.metrics import image_tv
    assert image_tv(fbp)[0] > image_tv(art)[0]


def test_backprojection_weights_pixel_size():
    # a constant sinogram back-projects to pixel_size per view on average
    geo = parallel_geometry(32, 8, pixel_size_cm=0.25)
    bp = back_stack(np.ones((1, 8, geo.num_bins)), geo)[0]
    inside = disk(32, 12) > 0
    assert bp[inside].mean() == pytest.approx(8 * 0.25, rel=0.02)
