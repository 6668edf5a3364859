"""Multi-channel U-Net with a hand-written backward pass.

Topology (levels=3): encoder blocks at N, N/2, N/4, a bottleneck at N/8
and decoder blocks back up to N.  Every block is two zero-padded KxK
convolutions with ReLU; in training mode dropout follows the block's last
layer.  Up-sampling is a nearest-neighbour resize followed by a KxK
convolution, and decoder blocks concatenate the matching encoder output.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import NumericalFailure
from . import layers as L

CHECKPOINT_MAGIC = b"SCTM"
CHECKPOINT_VERSION = 1


class StateError(RuntimeError):
    pass


@dataclass(frozen=True)
class UNetConfig:
    in_channels: int = 32
    out_channels: int = 32
    levels: int = 3
    base_filters: int = 64
    kernel_size: int = 3
    dropout_rate: float = 0.02
    input_size: int = 96
    residual: bool = False

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.levels, self.base_filters) < 1:
            raise ValueError("channel, level and filter counts must be >= 1")
        if self.kernel_size % 2 != 1:
            raise ValueError("kernel_size must be odd")
        if self.input_size % (2 ** self.levels):
            raise ValueError(f"input_size {self.input_size} not divisible by 2^{self.levels}")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.residual and self.in_channels != self.out_channels:
            raise ValueError("residual mode needs in_channels == out_channels")

    @property
    def num_conv_layers(self) -> int:
        return 2 * (2 * self.levels + 1) + self.levels

    @property
    def num_blocks(self) -> int:
        return 2 * self.levels + 1


@dataclass
class ConvSpec:
    name: str
    in_ch: int
    out_ch: int
    block: str | None  # block name when this conv belongs to a block
    last_in_block: bool = False


def layer_specs(cfg: UNetConfig) -> list[ConvSpec]:
    """Convolution layers in declaration order."""
    r, s = cfg.base_filters, cfg.in_channels
    specs: list[ConvSpec] = []
    prev = s
    for lvl in range(cfg.levels):
        f = r * 2 ** lvl
        specs += [ConvSpec(f"enc{lvl}_a", prev, f, f"enc{lvl}"),
                  ConvSpec(f"enc{lvl}_b", f, f, f"enc{lvl}", True)]
        prev = f
    f = r * 2 ** cfg.levels
    specs += [ConvSpec("bottom_a", prev, f, "bottom"), ConvSpec("bottom_b", f, f, "bottom", True)]
    prev = f
    for lvl in reversed(range(cfg.levels)):
        f = r * 2 ** lvl
        out = cfg.out_channels if lvl == 0 else f
        specs += [ConvSpec(f"up{lvl}", prev, f, None),
                  ConvSpec(f"dec{lvl}_a", 2 * f, f, f"dec{lvl}"),
                  ConvSpec(f"dec{lvl}_b", f, out, f"dec{lvl}", True)]
        prev = out
    return specs


@dataclass
class UNetModel:
    config: UNetConfig
    weights: dict[str, np.ndarray] = field(default_factory=dict)
    biases: dict[str, np.ndarray] = field(default_factory=dict)
    training: bool = False
    _cache: dict | None = field(default=None, repr=False)

    @property
    def specs(self) -> list[ConvSpec]:
        return layer_specs(self.config)

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list: weight then bias for each layer in declaration order."""
        out = []
        for spec in self.specs:
            out += [self.weights[spec.name], self.biases[spec.name]]
        return out

    def parameter_names(self) -> list[str]:
        out = []
        for spec in self.specs:
            out += [f"{spec.name}.weight", f"{spec.name}.bias"]
        return out

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def copy(self) -> "UNetModel":
        return UNetModel(self.config, {k: v.copy() for k, v in self.weights.items()},
                         {k: v.copy() for k, v in self.biases.items()}, self.training)

    def astype(self, dtype) -> "UNetModel":
        return UNetModel(self.config, {k: v.astype(dtype) for k, v in self.weights.items()},
                         {k: v.astype(dtype) for k, v in self.biases.items()}, self.training)


def build_unet(cfg: UNetConfig, rng_seed: int = 0) -> UNetModel:
    """Fan-in scaled uniform weights (He-uniform bound), zero biases."""
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 3]))
    k = cfg.kernel_size
    model = UNetModel(cfg)
    for spec in layer_specs(cfg):
        fan_in = spec.in_ch * k * k
        bound = np.sqrt(6.0 / fan_in)
        model.weights[spec.name] = rng.uniform(-bound, bound, size=(spec.out_ch, spec.in_ch, k, k))
        model.biases[spec.name] = np.zeros(spec.out_ch)
    return model


def _tile_to(t: np.ndarray, batch: int) -> np.ndarray:
    return t if t.shape[0] == batch else np.tile(t, (batch // t.shape[0],) + (1,) * (t.ndim - 1))


def dropout_mask(seed: int, block_index: int, shape, rate: float, dtype=np.float64) -> np.ndarray:
    """Inverted-dropout mask for one block, reproducible from (seed, block)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 11, block_index]))
    return (rng.random(shape) >= rate).astype(dtype) / (1.0 - rate)


def forward(model: UNetModel, x: np.ndarray, training: bool = False, rng_seed: int = 0,
            keep_cache: bool | None = None, _perturb=None) -> np.ndarray:
    """Run the network on an NCHW batch of scaled images.

    In training mode dropout masks are drawn from ``rng_seed`` (inverted
    dropout, one independent stream per block).  The activations needed by
    :func:`backward` are cached on the model when ``keep_cache`` is true
    (default: in training mode).

    ``_perturb=(layer, delta)`` adds ``delta`` of shape (P, B, C, H, W) to
    that layer's pre-activation and carries the P variants through the rest
    of the network as a P*B batch; used by the finite-difference checker.
    """
    cfg = model.config
    dtype = model.weights["enc0_a"].dtype
    x = np.asarray(x, dtype=dtype)
    if x.ndim != 4 or x.shape[1] != cfg.in_channels or x.shape[2:] != (cfg.input_size, cfg.input_size):
        raise ValueError(f"expected batch of shape (B, {cfg.in_channels}, {cfg.input_size}, "
                         f"{cfg.input_size}), got {x.shape}")
    if keep_cache is None:
        keep_cache = training
    batch = x.shape[0]
    cache: dict = {"inputs": {}, "outputs": {}, "pool": {}, "masks": {}, "seed": rng_seed,
                   "training": training, "x": x}
    use_dropout = training and cfg.dropout_rate > 0
    block_index = {}

    def conv(name, inp):
        pre = L.conv2d(inp, model.weights[name], model.biases[name])
        if _perturb is not None and _perturb[0] == name:
            delta = _perturb[1]
            pre = (pre[None] + delta).reshape((-1,) + pre.shape[1:])
        out = L.relu(pre)
        if keep_cache:
            cache["inputs"][name] = inp
            cache["outputs"][name] = out
        return out

    def block(prefix, inp):
        h = conv(f"{prefix}_b", conv(f"{prefix}_a", inp))
        if use_dropout:
            idx = block_index.setdefault(prefix, len(block_index))
            mask = dropout_mask(rng_seed, idx, (batch,) + h.shape[1:], cfg.dropout_rate, dtype)
            if keep_cache:
                cache["masks"][prefix] = mask
            h = h * _tile_to(mask, h.shape[0])
        return h

    skips = []
    h = x
    for lvl in range(cfg.levels):
        h = block(f"enc{lvl}", h)
        skips.append(h)
        h, arg = L.maxpool2(h)
        if keep_cache:
            cache["pool"][lvl] = arg
    h = block("bottom", h)
    for lvl in reversed(range(cfg.levels)):
        h = conv(f"up{lvl}", L.upsample2(h))
        h = block(f"dec{lvl}", np.concatenate([h, _tile_to(skips[lvl], h.shape[0])], axis=1))
    if cfg.residual:
        h = h + _tile_to(x, h.shape[0])
    model._cache = cache if keep_cache else None
    return h


def backward(model: UNetModel, upstream: np.ndarray) -> list[np.ndarray]:
    """Parameter gradients for the forward pass cached on ``model``.

    Returns a list aligned with :meth:`UNetModel.parameters`.
    """
    cache = model._cache
    if cache is None:
        raise StateError("backward() needs a cached forward pass (forward(..., keep_cache=True))")
    cfg = model.config
    grads_w: dict[str, np.ndarray] = {}
    grads_b: dict[str, np.ndarray] = {}

    def conv_back(name, dout):
        dout = L.relu_backward(cache["outputs"][name], dout)
        dx, dw, db = L.conv2d_backward(cache["inputs"][name], model.weights[name], dout)
        grads_w[name], grads_b[name] = dw, db
        return dx

    def block_back(prefix, dout):
        if prefix in cache["masks"]:
            dout = dout * cache["masks"][prefix]
        return conv_back(f"{prefix}_a", conv_back(f"{prefix}_b", dout))

    g = np.asarray(upstream, dtype=cache["x"].dtype)
    skip_grads = {}
    for lvl in range(cfg.levels):
        d = block_back(f"dec{lvl}", g)
        f = d.shape[1] // 2
        skip_grads[lvl] = d[:, f:]
        g = L.upsample2_backward(conv_back(f"up{lvl}", d[:, :f]))
    g = block_back("bottom", g)
    for lvl in reversed(range(cfg.levels)):
        g = L.maxpool2_backward(cache["pool"][lvl], g) + skip_grads[lvl]
        g = block_back(f"enc{lvl}", g)
    out = []
    for spec in model.specs:
        out += [grads_w[spec.name], grads_b[spec.name]]
    return out


def check_finite(model: UNetModel):
    for p in model.parameters():
        if not np.all(np.isfinite(p)):
            raise NumericalFailure("non-finite network weights")


# --- checkpoint format ------------------------------------------------------

def save_checkpoint(model: UNetModel, path, metadata: dict | None = None) -> None:
    """Binary checkpoint: magic, version, config JSON, float64 LE tensors.

    ``metadata`` (run provenance) rides along in the JSON header under ``"run"``.
    """
    header = asdict(model.config)
    if metadata is not None:
        header["run"] = metadata
    meta = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(meta)))
        fh.write(meta)
        for p in model.parameters():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path) -> UNetModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    version, meta_len = struct.unpack_from("<II", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = 12 + meta_len
    header = json.loads(blob[12:offset].decode())
    header.pop("run", None)
    cfg = UNetConfig(**header)
    model = build_unet(cfg, 0)
    for spec in model.specs:
        for store in (model.weights, model.biases):
            shape = store[spec.name].shape
            count = int(np.prod(shape))
            nbytes = 8 * count
            if offset + nbytes > len(blob):
                raise ValueError(f"{path}: truncated at layer {spec.name}")
            store[spec.name] = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
            offset += nbytes
    if offset != len(blob):
        raise ValueError(f"{path}: {len(blob) - offset} trailing bytes; shapes do not match config")
    return model


def checkpoint_metadata(path) -> dict:
    with open(path, "rb") as fh:
        head = fh.read(12)
        if head[:4] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        _, meta_len = struct.unpack_from("<II", head, 4)
        return json.loads(fh.read(meta_len).decode()).get("run", {})
