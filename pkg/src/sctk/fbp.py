"""Filtered back projection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .core import SpectralImage, SpectralSinogram
from .projector import ScanGeometry, back_stack

FILTER_KINDS = ("ram-lak", "hann")


@dataclass(frozen=True)
class FilterConfig:
    kind: str = "ram-lak"
    zero_pad_factor: int = 2

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}; expected one of {FILTER_KINDS}")
        if self.zero_pad_factor < 2:
            raise ValueError("zero_pad_factor must be >= 2")


def ram_lak_kernel(length: int) -> np.ndarray:
    """Spatial Ram-Lak taps in circular order for an FFT of ``length``.

    Center 1/4, odd offsets -1/(pi k)^2, even offsets 0 (unit detector spacing).
    """
    k = np.concatenate([np.arange(0, length // 2 + 1), np.arange(-(length // 2) + 1, 0)])
    h = np.zeros(length)
    h[0] = 0.25
    odd = k % 2 == 1
    h[odd] = -1.0 / (np.pi * k[odd]) ** 2
    return h


@lru_cache(maxsize=64)
def ramp_response(num_bins: int, cfg: FilterConfig = FilterConfig()) -> np.ndarray:
    """Real frequency response on the rfft grid of the padded FFT length."""
    length = 1 << int(math.ceil(math.log2(cfg.zero_pad_factor * num_bins)))
    resp = np.fft.rfft(ram_lak_kernel(length)).real
    if cfg.kind == "hann":
        freq = np.fft.rfftfreq(length)  # cycles per sample, [0, 0.5]
        resp = resp * 0.5 * (1.0 + np.cos(2 * np.pi * freq))
    resp.setflags(write=False)
    return resp


def filter_sinogram(sino: np.ndarray, cfg: FilterConfig = FilterConfig()) -> np.ndarray:
    """Ramp-filter every detector row (last axis) with a zero-padded FFT.

    Output is in units of the input per detector sample; divide by the
    physical detector spacing for a calibrated ramp.
    """
    sino = np.asarray(sino, dtype=np.float64)
    if sino.ndim < 1 or sino.shape[-1] < 1:
        raise ValueError("sinogram needs a detector axis")
    nb = sino.shape[-1]
    resp = ramp_response(nb, cfg)
    length = 2 * (resp.size - 1)
    spec = np.fft.rfft(sino, n=length, axis=-1)
    return np.fft.irfft(spec * resp, n=length, axis=-1)[..., :nb]


def fbp_stack(data: np.ndarray, geo: ScanGeometry, cfg: FilterConfig = FilterConfig()) -> np.ndarray:
    """FBP of an S x V x D array, returning S x N x N in cm^-1.

    The matched back-projector already weights each view by the pixel
    size, so the pixel size cancels against the detector spacing in cm.
    """
    if data.shape[1:] != (geo.num_views, geo.num_bins):
        raise ValueError(f"sinogram shape {data.shape[1:]} does not match geometry "
                         f"({geo.num_views}, {geo.num_bins})")
    filtered = filter_sinogram(data, cfg)
    tau_cm = geo.detector_spacing * geo.pixel_size_cm
    # 2pi/V angular weight, halved for the full-circle redundancy
    scale = math.pi / geo.num_views / (tau_cm * geo.pixel_size_cm)
    return back_stack(filtered, geo) * scale


def fbp_reconstruct(sino: SpectralSinogram, geo: ScanGeometry,
                    cfg: FilterConfig = FilterConfig()) -> SpectralImage:
    if sino.views != geo.num_views or not np.allclose(sino.angles_rad, geo.angles):
        raise ValueError("sinogram angles do not match geometry")
    return SpectralImage(fbp_stack(sino.data, geo, cfg), geo.pixel_size_cm)
