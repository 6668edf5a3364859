"""Two-step reconstruction: per-channel FBP, then joint refinement by the U-Net."""

from __future__ import annotations

import numpy as np

from ..core import ScaleReference, SpectralImage, SpectralSinogram, rescale_from_unit, scale_to_unit
from ..fbp import FilterConfig, fbp_reconstruct
from ..projector import ScanGeometry
from .unet import UNetModel, forward


def refine(model: UNetModel, fbp_images: np.ndarray, ref: ScaleReference = ScaleReference(),
           batch: int = 8) -> np.ndarray:
    """Network pass on a (B, S, N, N) stack of FBP images in cm^-1; output clamped to [0, ref].

    A single-channel model is applied to each channel separately.
    """
    fbp_images = np.asarray(fbp_images, dtype=np.float64)
    if model.config.in_channels == 1 and fbp_images.shape[1] > 1:
        b, s, n, m = fbp_images.shape
        flat = refine(model, fbp_images.reshape(b * s, 1, n, m), ref, batch * s)
        return flat.reshape(b, s, n, m)
    out = np.empty_like(fbp_images)
    for s in range(0, len(fbp_images), batch):
        scaled = fbp_images[s:s + batch] / ref.max_attenuation
        out[s:s + batch] = forward(model, scaled, training=False) * ref.max_attenuation
    return np.clip(out, 0.0, ref.max_attenuation)


def dsir_reconstruct(sino: SpectralSinogram, geo: ScanGeometry, model: UNetModel,
                     ref: ScaleReference = ScaleReference(),
                     filter_cfg: FilterConfig = FilterConfig()) -> SpectralImage:
    cfg = model.config
    if cfg.in_channels not in (1, sino.channels) or geo.image_size != cfg.input_size:
        raise ValueError(f"model expects {cfg.in_channels} channels at {cfg.input_size}px, got "
                         f"{sino.channels} channels at {geo.image_size}px")
    fbp = fbp_reconstruct(sino, geo, filter_cfg)
    if cfg.in_channels != sino.channels:
        return SpectralImage(refine(model, fbp.data[None], ref)[0], fbp.pixel_size_cm)
    scaled = scale_to_unit(fbp, ref)
    pred = forward(model, scaled.data[None], training=False)[0]
    out = rescale_from_unit(SpectralImage(pred, fbp.pixel_size_cm), ref)
    return SpectralImage(np.clip(out.data, 0.0, ref.max_attenuation), out.pixel_size_cm)
