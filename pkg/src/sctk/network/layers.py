"""Array-level building blocks with explicit backward passes.

All tensors are NCHW.  Convolutions are zero-padded ("same") with odd
kernels and implemented through an im2col view plus a single matmul.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    b, c, h, w = x.shape
    p = k // 2
    xp = np.zeros((b, c, h + 2 * p, w + 2 * p), dtype=x.dtype)
    xp[:, :, p:p + h, p:p + w] = x
    sb, sc, sh, sw = xp.strides
    win = as_strided(xp, (b, h, w, c, k, k), (sb, sh, sw, sc, sh, sw), writeable=False)
    return win.reshape(b * h * w, c * k * k)


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    b, _, h, w = x.shape
    co, _, k, _ = weight.shape
    out = _im2col(x, k) @ weight.reshape(co, -1).T
    out += bias
    return out.reshape(b, h, w, co).transpose(0, 3, 1, 2)


def conv2d_backward(x: np.ndarray, weight: np.ndarray, dout: np.ndarray):
    """Gradients of ``conv2d`` w.r.t. input, weight and bias."""
    b, c, h, w = x.shape
    co, _, k, _ = weight.shape
    p = k // 2
    d2 = dout.transpose(0, 2, 3, 1).reshape(b * h * w, co)
    dw = (d2.T @ _im2col(x, k)).reshape(weight.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ weight.reshape(co, -1)).reshape(b, h, w, c, k, k)
    dxp = np.zeros((b, c, h + 2 * p, w + 2 * p), dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + h, j:j + w] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dxp[:, :, p:p + h, p:p + w], dw, db


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(y: np.ndarray, dout: np.ndarray) -> np.ndarray:
    # y is the activation output; its positivity pattern is the derivative
    return dout * (y > 0)


def maxpool2(x: np.ndarray):
    """2 x 2 max pooling; returns the output and the winning-position index."""
    b, c, h, w = x.shape
    blocks = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // 2, w // 2, 4)
    arg = blocks.argmax(axis=-1)
    return np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0], arg


def maxpool2_backward(arg: np.ndarray, dout: np.ndarray) -> np.ndarray:
    b, c, h2, w2 = dout.shape
    blocks = np.zeros((b, c, h2, w2, 4), dtype=dout.dtype)
    np.put_along_axis(blocks, arg[..., None], dout[..., None], axis=-1)
    return blocks.reshape(b, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, 2 * h2, 2 * w2)


def upsample2(x: np.ndarray) -> np.ndarray:
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample2_backward(dout: np.ndarray) -> np.ndarray:
    b, c, h, w = dout.shape
    return dout.reshape(b, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))
