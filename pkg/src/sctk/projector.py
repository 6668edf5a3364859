"""Parallel-beam Joseph projector and its matched adjoint.

The projector is stored as an explicit sparse system matrix, one row per
(view, bin) ray and one column per pixel (row-major).  Back-projection is
the transpose of the very same matrix, so the pair is adjoint to machine
precision by construction.

Coordinates: pixel (i, j) has its center at x = j - (N-1)/2,
y = (N-1)/2 - i in pixel units.  A ray at angle theta and detector
position t is the line x cos(theta) + y sin(theta) = t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .core import SpectralImage, SpectralSinogram


def default_num_bins(image_size: int) -> int:
    return int(math.ceil(image_size * math.sqrt(2))) + 1


def full_circle_angles(num_views: int) -> np.ndarray:
    return 2 * np.pi * np.arange(num_views) / num_views


@dataclass(frozen=True)
class ScanGeometry:
    image_size: int
    angles_rad: tuple[float, ...]
    num_bins: int
    detector_spacing: float = 1.0
    pixel_size_cm: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "angles_rad", tuple(float(a) for a in self.angles_rad))
        if self.image_size < 1 or self.num_bins < 1 or not self.angles_rad:
            raise ValueError("geometry needs N >= 1, D >= 1 and at least one view")
        if self.detector_spacing <= 0 or self.pixel_size_cm <= 0:
            raise ValueError("spacings must be positive")

    @property
    def num_views(self) -> int:
        return len(self.angles_rad)

    @property
    def angles(self) -> np.ndarray:
        return np.asarray(self.angles_rad)

    def with_angles(self, angles) -> "ScanGeometry":
        return ScanGeometry(self.image_size, tuple(angles), self.num_bins,
                            self.detector_spacing, self.pixel_size_cm)

    def describe(self) -> dict:
        return {
            "image_size": self.image_size,
            "num_views": self.num_views,
            "num_bins": self.num_bins,
            "detector_spacing": self.detector_spacing,
            "pixel_size_cm": self.pixel_size_cm,
            "angles_rad": [round(a, 12) for a in self.angles_rad],
        }


def parallel_geometry(image_size: int, num_views: int, pixel_size_cm: float = 0.1) -> ScanGeometry:
    """Views evenly spaced over [0, 2pi), detector covering the image diagonal."""
    return ScanGeometry(image_size, tuple(full_circle_angles(num_views)),
                        default_num_bins(image_size), 1.0, pixel_size_cm)


def _view_weights(theta: float, n: int, bins: np.ndarray):
    """(bin index, pixel index, weight) triplets for one view, pixel-size free."""
    c, s = math.cos(theta), math.sin(theta)
    centers = np.arange(n) - (n - 1) / 2.0
    nb = bins.size
    if abs(c) >= abs(s):
        # march over rows, interpolate across columns
        y = -centers  # y of row i
        u = (bins[:, None] - y[None, :] * s) / c + (n - 1) / 2.0  # (D, N) column positions
        step = 1.0 / abs(c)
        rows_idx = np.broadcast_to(np.arange(n)[None, :], u.shape)
        j0 = np.floor(u).astype(np.int64)
        f = u - j0
        parts = []
        for jj, w in ((j0, 1.0 - f), (j0 + 1, f)):
            ok = (jj >= 0) & (jj < n) & (w > 0)
            d_idx = np.broadcast_to(np.arange(nb)[:, None], u.shape)[ok]
            parts.append((d_idx, rows_idx[ok] * n + jj[ok], w[ok] * step))
    else:
        # march over columns, interpolate across rows
        x = centers
        y = (bins[:, None] - x[None, :] * c) / s
        r = (n - 1) / 2.0 - y
        step = 1.0 / abs(s)
        cols_idx = np.broadcast_to(np.arange(n)[None, :], r.shape)
        i0 = np.floor(r).astype(np.int64)
        f = r - i0
        parts = []
        for ii, w in ((i0, 1.0 - f), (i0 + 1, f)):
            ok = (ii >= 0) & (ii < n) & (w > 0)
            d_idx = np.broadcast_to(np.arange(nb)[:, None], r.shape)[ok]
            parts.append((d_idx, ii[ok] * n + cols_idx[ok], w[ok] * step))
    d = np.concatenate([p[0] for p in parts])
    pix = np.concatenate([p[1] for p in parts])
    w = np.concatenate([p[2] for p in parts])
    return d, pix, w


@lru_cache(maxsize=32)
def system_matrix(geo: ScanGeometry) -> sp.csr_matrix:
    """Sparse (V*D) x (N*N) matrix of ray weights in cm."""
    n, nb = geo.image_size, geo.num_bins
    bins = (np.arange(nb) - (nb - 1) / 2.0) * geo.detector_spacing
    rows, cols, vals = [], [], []
    for v, theta in enumerate(geo.angles_rad):
        d, pix, w = _view_weights(theta, n, bins)
        rows.append(v * nb + d)
        cols.append(pix)
        vals.append(w)
    mat = sp.coo_matrix(
        (np.concatenate(vals) * geo.pixel_size_cm, (np.concatenate(rows), np.concatenate(cols))),
        shape=(geo.num_views * nb, n * n),
    ).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def forward_project(img: np.ndarray, geo: ScanGeometry) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.shape != (geo.image_size, geo.image_size):
        raise ValueError(f"image shape {img.shape} does not match geometry N={geo.image_size}")
    return (system_matrix(geo) @ img.ravel()).reshape(geo.num_views, geo.num_bins)


def back_project(sino: np.ndarray, geo: ScanGeometry) -> np.ndarray:
    sino = np.asarray(sino, dtype=np.float64)
    if sino.shape != (geo.num_views, geo.num_bins):
        raise ValueError(f"sinogram shape {sino.shape} does not match geometry "
                         f"({geo.num_views}, {geo.num_bins})")
    return (system_matrix(geo).T @ sino.ravel()).reshape(geo.image_size, geo.image_size)


def forward_stack(x: np.ndarray, geo: ScanGeometry) -> np.ndarray:
    """Channel-wise forward projection of an S x N x N array."""
    s = x.shape[0]
    if x.shape[1:] != (geo.image_size, geo.image_size):
        raise ValueError(f"image shape {x.shape[1:]} does not match geometry N={geo.image_size}")
    out = system_matrix(geo) @ x.reshape(s, -1).T
    return out.T.reshape(s, geo.num_views, geo.num_bins)


def back_stack(y: np.ndarray, geo: ScanGeometry) -> np.ndarray:
    s = y.shape[0]
    if y.shape[1:] != (geo.num_views, geo.num_bins):
        raise ValueError(f"sinogram shape {y.shape[1:]} does not match geometry "
                         f"({geo.num_views}, {geo.num_bins})")
    out = system_matrix(geo).T @ y.reshape(s, -1).T
    return out.T.reshape(s, geo.image_size, geo.image_size)


def spectral_forward(img: SpectralImage, geo: ScanGeometry) -> SpectralSinogram:
    return SpectralSinogram(forward_stack(img.data, geo), geo.angles)


def spectral_back(sino: SpectralSinogram, geo: ScanGeometry) -> SpectralImage:
    if not np.allclose(sino.angles_rad, geo.angles):
        raise ValueError("sinogram angles do not match geometry")
    return SpectralImage(back_stack(sino.data, geo), geo.pixel_size_cm)


def operator_norm(geo: ScanGeometry, iterations: int = 50, seed: int = 0) -> float:
    """Power-iteration estimate of the spectral norm of the projector."""
    if iterations < 10:
        raise ValueError("at least 10 power iterations required")
    a = system_matrix(geo)
    return power_norm(lambda v: a @ v, lambda w: a.T @ w, (a.shape[1],), iterations, seed)


def power_norm(apply, apply_t, shape, iterations: int, seed: int = 0) -> float:
    """sqrt of the Rayleigh quotient of ``apply_t(apply(.))`` after power iteration.

    For a PSD normal operator the estimate is non-decreasing in ``iterations``.
    """
    x = np.random.default_rng(seed).standard_normal(shape)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iterations):
        y = apply_t(apply(x))
        est = math.sqrt(max(float(np.vdot(x, y)), 0.0))
        nrm = np.linalg.norm(y)
        if nrm == 0:
            return 0.0
        x = y / nrm
    return est
