"""Central finite differences over every network parameter.

Perturbing one weight of a convolution shifts that layer's pre-activation
by ``step`` times a shifted input channel, so many perturbations can be
pushed through the remainder of the network as one large batch.
"""

from __future__ import annotations

import numpy as np

from .unet import UNetModel, forward


def _unit_responses(inp: np.ndarray, kernel: int, out_ch: int, flat_idx: np.ndarray, n_weights: int):
    """Pre-activation change per unit parameter change, shape (P, B, Co, H, W)."""
    b, c, h, w = inp.shape
    p = kernel // 2
    xp = np.pad(inp, ((0, 0), (0, 0), (p, p), (p, p)))
    out = np.zeros((flat_idx.size, b, out_ch, h, w), dtype=inp.dtype)
    for row, idx in enumerate(flat_idx):
        if idx < n_weights:
            o, ci, i, j = np.unravel_index(idx, (out_ch, c, kernel, kernel))
            out[row, :, o] = xp[:, ci, i:i + h, j:j + w]
        else:
            out[row, :, idx - n_weights] = 1.0
    return out


def finite_difference_gradients(model: UNetModel, x: np.ndarray, loss, step: float = 1e-5,
                                training: bool = False, rng_seed: int = 0, chunk: int = 256):
    """Central-difference gradient of ``loss(forward(model, x))`` for every parameter.

    ``loss`` maps an output batch shaped like ``forward``'s result to a float.
    Returns a list aligned with ``model.parameters()``.
    """
    forward(model, x, training=training, rng_seed=rng_seed, keep_cache=True)
    inputs = model._cache["inputs"]
    model._cache = None
    batch = x.shape[0]
    grads = []
    for spec in model.specs:
        weight = model.weights[spec.name]
        n_w = weight.size
        total = n_w + spec.out_ch
        flat = np.empty(total)
        for start in range(0, total, chunk):
            idx = np.arange(start, min(start + chunk, total))
            unit = _unit_responses(inputs[spec.name], weight.shape[-1], spec.out_ch, idx, n_w)
            delta = np.concatenate([step * unit, -step * unit])
            out = forward(model, x, training=training, rng_seed=rng_seed, keep_cache=False,
                          _perturb=(spec.name, delta))
            out = out.reshape((2, idx.size, batch) + out.shape[1:])
            plus = np.array([loss(o) for o in out[0]])
            minus = np.array([loss(o) for o in out[1]])
            flat[idx] = (plus - minus) / (2 * step)
        grads += [flat[:n_w].reshape(weight.shape), flat[n_w:]]
    return grads


def max_relative_error(analytic, numeric, floor: float = 1e-12) -> float:
    """Worst per-tensor error, each measured against that tensor's gradient scale.

    Central differences carry ~1e-10 absolute rounding noise at step 1e-5, so
    entry-wise ratios on gradients near 1e-7 only measure that noise.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = max(float(np.abs(a).max()), float(np.abs(n).max()), floor)
        worst = max(worst, float(np.abs(a - n).max()) / scale)
    return worst


def max_entrywise_error(analytic, numeric, floor: float = 1e-8) -> float:
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
