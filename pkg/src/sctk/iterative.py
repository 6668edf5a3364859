"""Iterative baselines: ART-TV (channel by channel) and TNV (joint spectral).

Both act on S x N x N stacks.  Image gradients everywhere use forward
differences with a replicate boundary, so the last column / row has a
zero difference.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numba
import numpy as np

from .core import NumericalFailure, SpectralImage, SpectralSinogram
from .projector import ScanGeometry, back_stack, forward_stack, power_norm, system_matrix

log = logging.getLogger(__name__)

TV_EPS = 1e-8


@dataclass(frozen=True)
class ArtTvConfig:
    outer_iters: int = 200
    tv_iters: int = 30
    art_relaxation: float = 1.0
    relaxation_decay: float = 0.99
    tv_step_ratio: float = 0.2
    nonneg: bool = True

    def __post_init__(self):
        if self.outer_iters < 1 or self.tv_iters < 0:
            raise ValueError("need outer_iters >= 1 and tv_iters >= 0")
        if not 0 < self.art_relaxation <= 2:
            raise ValueError("art_relaxation must lie in (0, 2]")


@dataclass(frozen=True)
class TnvConfig:
    lam: float = 1e-2
    iters: int = 200
    step_product_margin: float = 0.99
    tol: float = 1e-5
    nonneg: bool = True
    # tau / sigma; the primal image lives on a much smaller scale than the duals
    primal_dual_ratio: float = 25.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.primal_dual_ratio > 0:
            raise ValueError("primal_dual_ratio must be positive")
        if not 0 < self.step_product_margin <= 1:
            raise ValueError("step_product_margin must lie in (0, 1]")


# --- finite differences -------------------------------------------------------

def gradient(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences along columns (dx) and rows (dy), replicate boundary."""
    dx = np.zeros_like(x)
    dy = np.zeros_like(x)
    dx[..., :, :-1] = x[..., :, 1:] - x[..., :, :-1]
    dy[..., :-1, :] = x[..., 1:, :] - x[..., :-1, :]
    return dx, dy


def gradient_adjoint(px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Transpose of :func:`gradient` (i.e. minus the discrete divergence)."""
    out = np.zeros_like(px)
    out[..., :, :-1] -= px[..., :, :-1]
    out[..., :, 1:] += px[..., :, :-1]
    out[..., :-1, :] -= py[..., :-1, :]
    out[..., 1:, :] += py[..., :-1, :]
    return out


def tv_value(img: np.ndarray) -> float:
    """Isotropic total variation of a 2D image."""
    img = np.asarray(img, dtype=np.float64)
    dx, dy = gradient(img)
    return float(np.sqrt(dx * dx + dy * dy).sum())


def tv_per_channel(stack: np.ndarray) -> np.ndarray:
    dx, dy = gradient(np.asarray(stack, dtype=np.float64))
    return np.sqrt(dx * dx + dy * dy).sum(axis=(-2, -1))


def tv_subgradient(x: np.ndarray, eps: float = TV_EPS) -> np.ndarray:
    dx, dy = gradient(x)
    mag = np.sqrt(dx * dx + dy * dy + eps * eps)
    return gradient_adjoint(dx / mag, dy / mag)


def _descend_reference(x: np.ndarray, steps: int, lengths: np.ndarray) -> np.ndarray:
    # x: (S, N, N); lengths: (S,) absolute step length per channel
    x = x.copy()
    for _ in range(steps):
        g = tv_subgradient(x)
        norms = np.sqrt((g * g).sum(axis=(-2, -1)))
        safe = np.where(norms > 0, norms, 1.0)
        x -= (np.where(norms > 0, lengths / safe, 0.0))[:, None, None] * g
    return x


@numba.njit(cache=True)
def _descend_kernel(x, steps, lengths, eps):
    n_ch, h, w = x.shape
    g = np.empty((h, w))
    for c in range(n_ch):
        for _ in range(steps):
            g[:, :] = 0.0
            for i in range(h):
                for j in range(w):
                    dx = x[c, i, j + 1] - x[c, i, j] if j + 1 < w else 0.0
                    dy = x[c, i + 1, j] - x[c, i, j] if i + 1 < h else 0.0
                    mag = np.sqrt(dx * dx + dy * dy + eps * eps)
                    px = dx / mag
                    py = dy / mag
                    g[i, j] -= px + py
                    if j + 1 < w:
                        g[i, j + 1] += px
                    if i + 1 < h:
                        g[i + 1, j] += py
            nrm = np.sqrt(np.sum(g * g))
            if nrm == 0.0:
                break
            x[c] -= (lengths[c] / nrm) * g
    return x


def _descend(x: np.ndarray, steps: int, lengths: np.ndarray) -> np.ndarray:
    return _descend_kernel(np.array(x, dtype=np.float64, order="C"), steps,
                           np.asarray(lengths, dtype=np.float64), TV_EPS)


def tv_descent(img: np.ndarray, steps: int, step_size: float) -> np.ndarray:
    """Normalized TV subgradient descent.

    Each of the ``steps`` moves has Euclidean length ``step_size``; inside
    ART-TV the caller sets it to a fraction of the latest ART update norm.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    img = np.asarray(img, dtype=np.float64)
    return _descend(img[None], steps, np.array([step_size]))[0]


# --- ART-TV -------------------------------------------------------------------

@numba.njit(cache=True)
def _kaczmarz_sweep(indptr, indices, weights, row_norm2, b, x, relax):
    n_rows = indptr.size - 1
    n_ch = x.shape[1]
    for r in range(n_rows):
        nrm = row_norm2[r]
        if nrm == 0.0:
            continue
        lo = indptr[r]
        hi = indptr[r + 1]
        for c in range(n_ch):
            acc = 0.0
            for k in range(lo, hi):
                acc += weights[k] * x[indices[k], c]
            coef = relax * (b[r, c] - acc) / nrm
            for k in range(lo, hi):
                x[indices[k], c] += coef * weights[k]


def art_tv_stack(data: np.ndarray, geo: ScanGeometry, cfg: ArtTvConfig = ArtTvConfig()) -> np.ndarray:
    """ART-TV on an S x V x D array; channels never interact."""
    if data.shape[1:] != (geo.num_views, geo.num_bins):
        raise ValueError("sinogram does not match geometry")
    a = system_matrix(geo)
    n_ch = data.shape[0]
    npx = geo.image_size ** 2
    row_norm2 = np.asarray(a.multiply(a).sum(axis=1)).ravel()
    b = np.ascontiguousarray(data.reshape(n_ch, -1).T)
    x = np.zeros((npx, n_ch))
    initial = np.linalg.norm(b, axis=0)
    relax = cfg.art_relaxation
    n = geo.image_size
    for it in range(cfg.outer_iters):
        before = x.copy()
        _kaczmarz_sweep(a.indptr, a.indices, a.data, row_norm2, b, x, relax)
        if cfg.nonneg:
            np.maximum(x, 0.0, out=x)
        resid = np.linalg.norm(a @ x - b, axis=0)
        if not np.all(np.isfinite(resid)) or np.any(resid > 10 * initial + 1e-300):
            raise NumericalFailure(f"ART-TV diverged at outer iteration {it}")
        if cfg.tv_iters:
            dp = np.linalg.norm(x - before, axis=0)
            img = x.T.reshape(n_ch, n, n)
            img = _descend(img, cfg.tv_iters, cfg.tv_step_ratio * dp)
            x = np.ascontiguousarray(img.reshape(n_ch, npx).T)
        relax *= cfg.relaxation_decay
    return x.T.reshape(n_ch, n, n)


def art_tv_reconstruct(sino: SpectralSinogram, geo: ScanGeometry,
                       cfg: ArtTvConfig = ArtTvConfig()) -> SpectralImage:
    if not np.allclose(sino.angles_rad, geo.angles):
        raise ValueError("sinogram angles do not match geometry")
    return SpectralImage(art_tv_stack(sino.data, geo, cfg), geo.pixel_size_cm)


# --- nuclear-norm machinery ---------------------------------------------------

def singular_pair_2col(j: np.ndarray):
    """Closed-form SVD data of S x 2 matrices (batched over leading axes).

    Returns ``(s1, s2, v)`` with ``s1 >= s2 >= 0`` and ``v[..., :, k]`` the
    right singular vector of ``s_k``.  The right vectors come from the
    2 x 2 Gram matrix; the singular values are the norms ``|J v_k|``,
    which avoids the cancellation of taking square roots of eigenvalues.
    """
    j = np.asarray(j, dtype=np.float64)
    a = np.einsum("...s,...s->...", j[..., 0], j[..., 0])
    b = np.einsum("...s,...s->...", j[..., 0], j[..., 1])
    c = np.einsum("...s,...s->...", j[..., 1], j[..., 1])
    theta = 0.5 * np.arctan2(2 * b, a - c)
    ct, st = np.cos(theta), np.sin(theta)
    v = np.stack([np.stack([ct, -st], axis=-1), np.stack([st, ct], axis=-1)], axis=-2)
    jv = j @ v
    s1 = np.linalg.norm(jv[..., 0], axis=-1)
    s2 = np.linalg.norm(jv[..., 1], axis=-1)
    return s1, s2, v


def nuclear_norm_2col(j: np.ndarray) -> np.ndarray:
    s1, s2, _ = singular_pair_2col(j)
    return s1 + s2


def project_spectral_norm_ball(j: np.ndarray, radius: float) -> np.ndarray:
    """Project S x 2 matrices onto ``{||J||_2 <= radius}`` by clipping singular values."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    j = np.asarray(j, dtype=np.float64)
    s1, s2, v = singular_pair_2col(j)
    jv = j @ v
    with np.errstate(divide="ignore", invalid="ignore"):
        f1 = np.where(s1 > radius, radius / s1, 1.0)
        f2 = np.where(s2 > radius, radius / s2, 1.0)
    jv = jv * np.stack([f1, f2], axis=-1)[..., None, :]
    return jv @ np.swapaxes(v, -1, -2)


def spectral_jacobian(x: np.ndarray) -> np.ndarray:
    """Per-pixel S x 2 Jacobian, shape (N, N, S, 2), from an S x N x N stack."""
    dx, dy = gradient(x)
    return np.stack([np.moveaxis(dx, 0, -1), np.moveaxis(dy, 0, -1)], axis=-1)


def _jacobian_adjoint(jac: np.ndarray) -> np.ndarray:
    px = np.moveaxis(jac[..., 0], -1, 0)
    py = np.moveaxis(jac[..., 1], -1, 0)
    return gradient_adjoint(px, py)


def tnv_penalty(x: np.ndarray) -> float:
    """Sum over pixels of the nuclear norm of the spectral Jacobian."""
    return float(nuclear_norm_2col(spectral_jacobian(np.asarray(x, dtype=np.float64))).sum())


def tnv_objective(x: np.ndarray, data: np.ndarray, geo: ScanGeometry, lam: float) -> float:
    r = forward_stack(x, geo) - data
    return 0.5 * float((r * r).sum()) + lam * tnv_penalty(x)


def stacked_operator_norm(geo: ScanGeometry, channels: int = 1, iterations: int = 100, seed: int = 0) -> float:
    """Norm of K = [A; grad] acting on an S x N x N stack."""
    n = geo.image_size

    def apply(x):
        return forward_stack(x, geo), gradient(x)

    def apply_t(y):
        sino, (dx, dy) = y
        return back_stack(sino, geo) + gradient_adjoint(dx, dy)

    # K is block-diagonal over channels, so one channel gives the norm
    return power_norm(lambda x: apply(x[None]), lambda y: apply_t(y)[0], (n, n), iterations, seed)


def tnv_stack(data: np.ndarray, geo: ScanGeometry, cfg: TnvConfig = TnvConfig(),
              return_info: bool = False):
    """Chambolle-Pock for  0.5 ||A x - b||^2 + lam * sum_px ||J(x)||_*  (x >= 0)."""
    if data.shape[1:] != (geo.num_views, geo.num_bins):
        raise ValueError("sinogram does not match geometry")
    n_ch, n = data.shape[0], geo.image_size
    knorm = stacked_operator_norm(geo) * 1.01
    # sigma * tau * |K|^2 = margin, split by the configured ratio
    base = math.sqrt(cfg.step_product_margin) / knorm
    tau = base * math.sqrt(cfg.primal_dual_ratio)
    sigma = base / math.sqrt(cfg.primal_dual_ratio)
    x = np.zeros((n_ch, n, n))
    xbar = x.copy()
    y_data = np.zeros_like(data, dtype=np.float64)
    y_jac = np.zeros((n, n, n_ch, 2))
    it = 0
    for it in range(1, cfg.iters + 1):
        y_data = (y_data + sigma * (forward_stack(xbar, geo) - data)) / (1.0 + sigma)
        y_jac = project_spectral_norm_ball(y_jac + sigma * spectral_jacobian(xbar), cfg.lam)
        x_new = x - tau * (back_stack(y_data, geo) + _jacobian_adjoint(y_jac))
        if cfg.nonneg:
            np.maximum(x_new, 0.0, out=x_new)
        if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(y_data))):
            raise NumericalFailure(f"TNV produced non-finite values at iteration {it}")
        xbar = 2 * x_new - x
        change = np.linalg.norm(x_new - x) / max(np.linalg.norm(x_new), 1e-300)
        x = x_new
        if change < cfg.tol:
            break
    if return_info:
        return x, {"iterations": it, "sigma": sigma, "tau": tau, "operator_norm": knorm}
    return x


def tnv_reconstruct(sino: SpectralSinogram, geo: ScanGeometry, cfg: TnvConfig = TnvConfig()) -> SpectralImage:
    if not np.allclose(sino.angles_rad, geo.angles):
        raise ValueError("sinogram angles do not match geometry")
    return SpectralImage(tnv_stack(sino.data, geo, cfg), geo.pixel_size_cm)


def select_tnv_lambda(data: np.ndarray, truth: np.ndarray, geo: ScanGeometry, score,
                      grid=(1e-3, 3e-3, 1e-2, 3e-2, 1e-1), iters: int = 200) -> float:
    """Grid-search lambda on one validation slice, keeping the best ``score(recon, truth)``."""
    best, best_score = grid[0], -math.inf
    for lam in grid:
        rec = tnv_stack(data, geo, TnvConfig(lam=lam, iters=iters))
        sc = score(rec, truth)
        log.debug("tnv lambda %.3g -> score %.4f", lam, sc)
        if sc > best_score:
            best, best_score = lam, sc
    return best
