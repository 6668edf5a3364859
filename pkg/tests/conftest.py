import numpy as np
import pytest

from sctk.core import EnergyGrid
from sctk.projector import parallel_geometry


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def geo32_9():
    return parallel_geometry(32, 9)


@pytest.fixture(scope="session")
def grid8():
    return EnergyGrid.uniform(8)


def disk(n, radius_px, value=1.0):
    c = np.arange(n) - (n - 1) / 2
    x, y = np.meshgrid(c, -c)
    return np.where(x ** 2 + y ** 2 <= radius_px ** 2, value, 0.0)


def smooth_image(n, rng, cutoff=4):
    """Low-pass random field, non-negative."""
    spec = np.zeros((n, n), dtype=complex)
    spec[:cutoff, :cutoff] = rng.standard_normal((cutoff, cutoff)) + 1j * rng.standard_normal((cutoff, cutoff))
    img = np.fft.ifft2(spec).real
    img -= img.min()
    return img / img.max()
