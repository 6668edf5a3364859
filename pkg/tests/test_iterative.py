import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import disk, smooth_image
from sctk.core import EnergyGrid, NumericalFailure, SpectralSinogram
from sctk.fbp import fbp_stack
from sctk.iterative import (ArtTvConfig, TnvConfig, _descend_reference, art_tv_reconstruct, art_tv_stack,
                            gradient, gradient_adjoint, nuclear_norm_2col, project_spectral_norm_ball,
                            singular_pair_2col, tnv_objective, tnv_penalty, tnv_stack, tv_descent,
                            tv_per_channel, tv_subgradient, tv_value)
from sctk.metrics import image_tv, ssim
from sctk.phantom import (NoiseConfig, build_material_library, rasterize, sample_scene, simulate_scan,
                          subsample_views)
from sctk.projector import forward_stack, parallel_geometry


def loop_tv(img):
    n, m = img.shape
    total = 0.0
    for i in range(n):
        for j in range(m):
            dx = img[i, j + 1] - img[i, j] if j + 1 < m else 0.0
            dy = img[i + 1, j] - img[i, j] if i + 1 < n else 0.0
            total += np.sqrt(dx * dx + dy * dy)
    return total


def rel_err(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


@pytest.fixture(scope="module")
def scene48():
    grid = EnergyGrid.uniform(4)
    return rasterize(sample_scene(11, materials=build_material_library()), 48, grid).data


# --- TV -----------------------------------------------------------------------

def test_tv_trivial_images():
    assert tv_value(np.full((9, 9), 3.0)) == 0.0
    edge = np.zeros((16, 16))
    edge[:, 8:] = 1.0
    assert tv_value(edge) == pytest.approx(16.0, abs=1e-12)


def test_tv_matches_loop(rng):
    img = rng.standard_normal((8, 8))
    assert tv_value(img) == pytest.approx(loop_tv(img), rel=1e-13)


@pytest.mark.parametrize("alpha", [-2.0, 0.5, 3.0])
def test_tv_homogeneous(alpha, rng):
    for _ in range(20):
        img = rng.standard_normal((12, 12))
        assert tv_value(alpha * img) == pytest.approx(abs(alpha) * tv_value(img), rel=1e-12)


def test_gradient_adjoint(rng):
    x = rng.standard_normal((3, 10, 10))
    px, py = rng.standard_normal((2, 3, 10, 10))
    dx, dy = gradient(x)
    lhs = np.vdot(dx, px) + np.vdot(dy, py)
    assert lhs == pytest.approx(np.vdot(x, gradient_adjoint(px, py)), rel=1e-12)


def test_tv_subgradient_direction(rng):
    img = rng.standard_normal((10, 10))
    g = tv_subgradient(img)
    step = 1e-6
    assert tv_value(img - step * g) < tv_value(img)


def test_tv_descent_zero_steps_identity(rng):
    img = rng.random((10, 10))
    np.testing.assert_array_equal(tv_descent(img, 0, 0.1), img)


def test_tv_descent_monotone(rng):
    img = smooth_image(32, rng)
    for step in (0.05, 0.2):
        x = img
        prev = tv_value(x)
        for _ in range(30):
            x = tv_descent(x, 1, step)
            cur = tv_value(x)
            assert cur <= prev + 1e-12
            prev = cur


def test_tv_descent_constant_fixed_point():
    img = np.full((12, 12), 0.7)
    np.testing.assert_array_equal(tv_descent(img, 10, 0.2), img)


def test_descent_kernel_matches_numpy(rng):
    x = rng.random((3, 16, 16))
    lengths = np.array([0.1, 0.02, 0.3])
    ref = _descend_reference(x.copy(), 7, lengths)
    out = np.stack([tv_descent(x[c], 7, lengths[c]) for c in range(3)])
    np.testing.assert_allclose(out, ref, atol=1e-13)


def test_tv_descent_negative_steps():
    with pytest.raises(ValueError):
        tv_descent(np.zeros((4, 4)), -1, 0.1)


# --- ART-TV -------------------------------------------------------------------

def test_art_tv_zero_sinogram():
    geo = parallel_geometry(16, 5)
    assert np.all(art_tv_stack(np.zeros((2, 5, geo.num_bins)), geo, ArtTvConfig(outer_iters=5)) == 0)


def test_art_tv_noiseless_piecewise_constant(scene48):
    geo = parallel_geometry(48, 9)
    sino = forward_stack(scene48, geo)
    art = art_tv_stack(sino, geo)
    fbp = fbp_stack(sino, geo)
    assert rel_err(art, scene48) < 0.05
    s_art, s_fbp = ssim(art, scene48)[0], ssim(fbp, scene48)[0]
    assert s_art > s_fbp + 0.1


def test_art_converges_without_tv(rng):
    geo = parallel_geometry(16, 4)
    truth = rng.random((1, 16, 16))
    b = forward_stack(truth, geo)
    cfg = ArtTvConfig(outer_iters=200, tv_iters=0, relaxation_decay=1.0, nonneg=False)
    x = art_tv_stack(b, geo, cfg)
    assert np.linalg.norm(forward_stack(x, geo) - b) < 1e-6 * np.linalg.norm(b)


def test_art_tv_channel_order_invariant(scene48):
    geo = parallel_geometry(48, 9)
    sino = forward_stack(scene48, geo)
    cfg = ArtTvConfig(outer_iters=20)
    perm = np.array([2, 0, 3, 1])
    a = art_tv_stack(sino, geo, cfg)
    b = art_tv_stack(sino[perm], geo, cfg)
    np.testing.assert_array_equal(b, a[perm])


def test_art_tv_non_finite_data_aborts():
    geo = parallel_geometry(16, 4)
    b = np.zeros((1, 4, geo.num_bins))
    b[0, 1, 5] = np.nan
    with pytest.raises(NumericalFailure):
        art_tv_stack(b, geo, ArtTvConfig(outer_iters=3))


def test_art_tv_reconstruct_wrapper(scene48):
    geo = parallel_geometry(48, 9)
    sino = SpectralSinogram(forward_stack(scene48[:1], geo), geo.angles)
    out = art_tv_reconstruct(sino, geo, ArtTvConfig(outer_iters=3))
    assert out.data.shape == (1, 48, 48)


def test_art_tv_config_validation():
    with pytest.raises(ValueError):
        ArtTvConfig(art_relaxation=2.5)
    with pytest.raises(ValueError):
        ArtTvConfig(outer_iters=0)


# --- nuclear norm machinery ---------------------------------------------------

def test_singular_pair_zero():
    s1, s2, _ = singular_pair_2col(np.zeros((4, 2)))
    assert s1 == 0 and s2 == 0


def test_singular_pair_rank_one(rng):
    u, v = rng.standard_normal(6), rng.standard_normal(2)
    j = np.outer(u, v)
    s1, s2, _ = singular_pair_2col(j)
    assert s1 == pytest.approx(np.linalg.norm(u) * np.linalg.norm(v), rel=1e-12)
    assert s2 == pytest.approx(0.0, abs=1e-12 * s1)
    assert nuclear_norm_2col(j) == pytest.approx(np.linalg.norm(j), rel=1e-12)


def test_singular_pair_matches_svd(rng):
    j = rng.standard_normal((200, 5, 2))
    s1, s2, _ = singular_pair_2col(j)
    ref = np.linalg.svd(j, compute_uv=False)
    np.testing.assert_allclose(s1, ref[:, 0], atol=1e-12)
    np.testing.assert_allclose(s2, ref[:, 1], atol=1e-12)
    assert np.all(s1 >= s2)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 2), elements=st.floats(-1e3, 1e3)))
def test_singular_pair_property(j):
    s1, s2, _ = singular_pair_2col(j)
    ref = np.linalg.svd(j, compute_uv=False)
    scale = max(ref[0], 1.0)
    assert abs(s1 - ref[0]) <= 1e-10 * scale
    assert abs(s2 - ref[1]) <= 1e-10 * scale


def test_projection_clips_singular_values(rng):
    q1, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    q2, _ = np.linalg.qr(rng.standard_normal((2, 2)))
    j = q1[:, :2] @ np.diag([3.0, 1.0]) @ q2.T
    out = project_spectral_norm_ball(j, 2.0)
    np.testing.assert_allclose(np.linalg.svd(out, compute_uv=False), [2.0, 1.0], atol=1e-12)


def test_projection_interior_unchanged(rng):
    j = rng.standard_normal((5, 2))
    j *= 0.9 / np.linalg.norm(j, 2)
    np.testing.assert_allclose(project_spectral_norm_ball(j, 1.0), j, atol=1e-14)


def test_projection_idempotent(rng):
    j = 3 * rng.standard_normal((100, 5, 2))
    once = project_spectral_norm_ball(j, 1.0)
    np.testing.assert_allclose(project_spectral_norm_ball(once, 1.0), once, atol=1e-12)


def test_projection_radius_validation():
    with pytest.raises(ValueError):
        project_spectral_norm_ball(np.ones((2, 2)), 0.0)


# --- TNV ----------------------------------------------------------------------

def test_tnv_identical_channels(rng):
    img = rng.random((12, 12))
    stack = np.repeat(img[None], 5, axis=0)
    assert tnv_penalty(stack) == pytest.approx(np.sqrt(5) * tv_value(img), rel=1e-12)


def test_tnv_single_channel_is_tv(rng):
    img = rng.random((1, 12, 12))
    assert tnv_penalty(img) == pytest.approx(tv_value(img[0]), rel=1e-12)


def test_tnv_sandwich(rng):
    # sigma1 + sigma2 >= ||J||_F >= the l2 mean of the per-channel gradient norms
    for s in (2, 3, 8):
        for _ in range(10):
            x = rng.standard_normal((s, 10, 10))
            per = tv_per_channel(x).sum()
            pen = tnv_penalty(x)
            assert pen <= per * (1 + 1e-12)
            assert pen >= per / np.sqrt(s) * (1 - 1e-12)


def test_tnv_dense_noiseless_recovers(rng):
    n = 32
    geo = parallel_geometry(n, 74)
    truth = np.stack([smooth_image(n, rng), disk(n, 10, 0.5)]) * (disk(n, 14) > 0)
    sino = forward_stack(truth, geo)
    rec = tnv_stack(sino, geo, TnvConfig(lam=1e-4, iters=600))
    assert rel_err(rec, truth) < 0.02


def test_tnv_plateau(scene48):
    geo = parallel_geometry(48, 9)
    data = forward_stack(scene48[:2], geo)
    lam = 1e-2
    short = tnv_stack(data, geo, TnvConfig(lam=lam, iters=200, tol=0.0))
    long = tnv_stack(data, geo, TnvConfig(lam=lam, iters=2000, tol=0.0))
    f_short, f_long = tnv_objective(short, data, geo, lam), tnv_objective(long, data, geo, lam)
    assert f_short == pytest.approx(f_long, rel=0.01)


def test_tnv_stops_on_tolerance():
    geo = parallel_geometry(16, 6)
    _, info = tnv_stack(np.zeros((2, 6, geo.num_bins)), geo, TnvConfig(iters=50), return_info=True)
    assert info["iterations"] == 1


def test_tnv_non_finite_data_aborts():
    geo = parallel_geometry(16, 4)
    b = np.zeros((2, 4, geo.num_bins))
    b[1, 0, 3] = np.inf
    with pytest.raises(NumericalFailure):
        tnv_stack(b, geo, TnvConfig(iters=5))


def test_tnv_sits_between_baselines_on_noisy_data():
    grid = EnergyGrid.uniform(4)
    phantom = rasterize(sample_scene(3, materials=build_material_library()), 48, grid)
    dense = parallel_geometry(48, 74)
    sino = simulate_scan(phantom, dense, NoiseConfig("poisson", incident_counts=1e4), seed=3)
    geo = parallel_geometry(48, 9)
    data = subsample_views(sino, 9).data
    tv_fbp = image_tv(fbp_stack(data, geo))[0]
    tv_art = image_tv(art_tv_stack(data, geo))[0]
    tv_tnv = image_tv(tnv_stack(data, geo, TnvConfig(lam=1e-2)))[0]
    assert tv_art < tv_tnv < tv_fbp, (tv_art, tv_tnv, tv_fbp)


def test_tnv_step_product_within_margin():
    geo = parallel_geometry(16, 6)
    cfg = TnvConfig(iters=2, tol=0.0)
    _, info = tnv_stack(np.ones((1, 6, geo.num_bins)), geo, cfg, return_info=True)
    assert info["sigma"] * info["tau"] * info["operator_norm"] ** 2 <= cfg.step_product_margin * (1 + 1e-12)
    assert info["tau"] / info["sigma"] == pytest.approx(cfg.primal_dual_ratio)
