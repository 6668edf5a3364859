import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sctk.core import SpectralImage
from sctk.iterative import tv_value
from sctk.metrics import PatchSpec, SsimConfig, image_tv, mae, spectral_profile, ssim


def brute_ssim(a, b, w=8, c1=(0.01 * 7.66) ** 2, c2=(0.03 * 7.66) ** 2):
    vals = []
    for i in range(a.shape[0] - w + 1):
        for j in range(a.shape[1] - w + 1):
            pa, pb = a[i:i + w, j:j + w].ravel(), b[i:i + w, j:j + w].ravel()
            ma, mb = pa.mean(), pb.mean()
            va, vb = ((pa - ma) ** 2).mean(), ((pb - mb) ** 2).mean()
            cov = ((pa - ma) * (pb - mb)).mean()
            vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def test_mae_examples(rng):
    a = rng.random((3, 10, 10))
    assert mae(a, a)[0] == 0.0
    total, per = mae(a, a + 0.5)
    assert total == pytest.approx(0.5)
    np.testing.assert_allclose(per, 0.5)


def test_mae_shape_mismatch():
    with pytest.raises(ValueError):
        mae(np.zeros((1, 4, 4)), np.zeros((1, 4, 5)))


def test_mae_triangle(rng):
    for _ in range(20):
        a, b, c = rng.standard_normal((3, 2, 9, 9))
        assert mae(a, c)[0] <= mae(a, b)[0] + mae(b, c)[0] + 1e-15


def test_ssim_self_is_one(rng):
    x = 7 * rng.random((4, 16, 16))
    total, per = ssim(x, x)
    assert total == 1.0
    assert np.all(per == 1.0)


def test_ssim_symmetric(rng):
    for _ in range(10):
        a, b = rng.random((2, 2, 20, 20))
        assert ssim(a, b)[0] == pytest.approx(ssim(b, a)[0], abs=1e-12)


def test_ssim_matches_brute_force(rng):
    a, b = 3 * rng.random((2, 16, 16))
    assert ssim(a, b)[0] == pytest.approx(brute_ssim(a, b), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (2, 1, 10, 10), elements=st.floats(0, 7.66)))
def test_ssim_bounded(pair):
    val = ssim(pair[0], pair[1])[0]
    assert -1 - 1e-12 <= val <= 1 + 1e-12


def test_ssim_negative_for_anticorrelated_images():
    checker = 7.66 * (np.indices((8, 8)).sum(axis=0) % 2)
    assert ssim(checker, 7.66 - checker)[0] < 0


def test_ssim_window_too_large():
    with pytest.raises(ValueError):
        ssim(np.zeros((1, 6, 6)), np.zeros((1, 6, 6)))
    assert ssim(np.zeros((1, 6, 6)), np.zeros((1, 6, 6)), SsimConfig(window=3))[0] == 1.0


def test_image_tv(rng):
    assert image_tv(np.full((2, 8, 8), 4.0))[0] == 0.0
    x = rng.standard_normal((3, 12, 12))
    np.testing.assert_allclose(image_tv(x)[1], [tv_value(c) / 144 for c in x], rtol=1e-14)


def test_metrics_flip_invariant(rng):
    a, b = rng.random((2, 3, 16, 16))
    fa, fb = a[:, :, ::-1], b[:, :, ::-1]
    assert mae(fa, fb)[0] == pytest.approx(mae(a, b)[0], rel=1e-14)
    assert ssim(fa, fb)[0] == pytest.approx(ssim(a, b)[0], rel=1e-14)


def test_accepts_spectral_image(rng):
    x = rng.random((2, 8, 8))
    assert mae(SpectralImage(x), x)[0] == 0.0


def test_profile_constant_patch():
    img = np.zeros((3, 10, 10))
    img[:, 2:6, 3:8] = np.array([5.0, 3.0, 1.0])[:, None, None]
    mean, std = spectral_profile(img, PatchSpec(2, 3, 4, 5, "metal"))
    np.testing.assert_array_equal(mean, [5.0, 3.0, 1.0])
    np.testing.assert_array_equal(std, 0.0)


def test_profile_single_pixel(rng):
    img = rng.random((4, 6, 6))
    mean, std = spectral_profile(img, PatchSpec(1, 4, 1, 1))
    np.testing.assert_array_equal(mean, img[:, 1, 4])
    assert np.all(std == 0)


def test_profile_out_of_bounds():
    with pytest.raises(ValueError):
        spectral_profile(np.zeros((1, 5, 5)), PatchSpec(3, 3, 3, 1))
