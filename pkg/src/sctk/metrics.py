"""Image quality metrics: MAE, windowed SSIM, TV and patch spectral profiles.

Every metric takes S x H x W stacks (plain arrays or SpectralImage) and
returns ``(scalar, per_channel)`` where the scalar is the channel mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import CADMIUM_MAX_ATTENUATION, SpectralImage
from .iterative import tv_per_channel


@dataclass(frozen=True)
class SsimConfig:
    window: int = 8
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = CADMIUM_MAX_ATTENUATION

    def __post_init__(self):
        if self.window < 1 or self.dynamic_range <= 0:
            raise ValueError("window must be >= 1 and dynamic_range > 0")


@dataclass(frozen=True)
class PatchSpec:
    row: int
    col: int
    height: int
    width: int
    label: str = ""


def _stack(img) -> np.ndarray:
    data = img.data if isinstance(img, SpectralImage) else np.asarray(img, dtype=np.float64)
    if data.ndim == 2:
        data = data[None]
    if data.ndim != 3:
        raise ValueError(f"expected S x H x W data, got shape {data.shape}")
    return data


def _pair(a, b):
    a, b = _stack(a), _stack(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def mae(a, b):
    a, b = _pair(a, b)
    per = np.abs(a - b).mean(axis=(1, 2))
    return float(per.mean()), per


def ssim(a, b, cfg: SsimConfig = SsimConfig()):
    """Mean SSIM over all valid positions of a uniform window, per channel."""
    a, b = _pair(a, b)
    w = cfg.window
    if w > a.shape[1] or w > a.shape[2]:
        raise ValueError(f"window {w} larger than image {a.shape[1:]}")
    c1 = (cfg.k1 * cfg.dynamic_range) ** 2
    c2 = (cfg.k2 * cfg.dynamic_range) ** 2
    wa = sliding_window_view(a, (w, w), axis=(1, 2))
    wb = sliding_window_view(b, (w, w), axis=(1, 2))
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    var_a = (wa * wa).mean(axis=(-2, -1)) - mu_a ** 2
    var_b = (wb * wb).mean(axis=(-2, -1)) - mu_b ** 2
    cov = (wa * wb).mean(axis=(-2, -1)) - mu_a * mu_b
    smap = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    per = smap.mean(axis=(1, 2))
    return float(per.mean()), per


def image_tv(img):
    """Per-pixel normalized isotropic TV."""
    data = _stack(img)
    per = tv_per_channel(data) / (data.shape[1] * data.shape[2])
    return float(per.mean()), per


def spectral_profile(img, patch: PatchSpec):
    data = _stack(img)
    if (patch.row < 0 or patch.col < 0 or patch.height < 1 or patch.width < 1
            or patch.row + patch.height > data.shape[1] or patch.col + patch.width > data.shape[2]):
        raise ValueError(f"patch {patch} outside image of shape {data.shape[1:]}")
    region = data[:, patch.row:patch.row + patch.height, patch.col:patch.col + patch.width]
    return region.mean(axis=(1, 2)), region.std(axis=(1, 2))
