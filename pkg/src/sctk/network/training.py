"""MAE loss, RMSprop, augmentation and the training loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..core import NumericalFailure
from .unet import UNetModel, backward, build_unet, forward

log = logging.getLogger(__name__)


def mae_loss(pred: np.ndarray, target: np.ndarray) -> float:
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.abs(pred - target).mean())


def loss_gradient(pred: np.ndarray, target: np.ndarray, count: int | None = None) -> np.ndarray:
    """d(MAE)/d(pred); ``count`` overrides the element count when the batch is split."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return np.sign(pred - target) / (pred.size if count is None else count)


@dataclass
class OptimizerState:
    base_lr: float = 1e-4
    lr_decay: float = 1e-6
    rho: float = 0.9
    epsilon: float = 1e-8
    step: int = 0
    accumulators: list[np.ndarray] = field(default_factory=list)

    def learning_rate(self) -> float:
        return self.base_lr / (1.0 + self.lr_decay * self.step)


def rmsprop_step(params: list[np.ndarray], grads: list[np.ndarray], state: OptimizerState) -> None:
    """In-place RMSprop update with time-based learning-rate decay."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    if not state.accumulators:
        state.accumulators = [np.zeros_like(p) for p in params]
    lr = state.learning_rate()
    for p, g, v in zip(params, grads, state.accumulators):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        v *= state.rho
        v += (1.0 - state.rho) * g * g
        p -= lr * g / (np.sqrt(v) + state.epsilon)
    state.step += 1


def augment(inputs: np.ndarray, targets: np.ndarray, rng_seed: int, noise_sigma: float = 0.02,
            flip_prob: float = 0.5):
    """Random flips applied jointly to input/target, Gaussian noise on the input only."""
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 29]))
    b = inputs.shape[0]
    hflip = rng.random(b) < flip_prob
    vflip = rng.random(b) < flip_prob
    x = inputs.copy()
    y = targets.copy()
    x[hflip] = x[hflip][..., ::-1]
    y[hflip] = y[hflip][..., ::-1]
    x[vflip] = x[vflip][..., ::-1, :]
    y[vflip] = y[vflip][..., ::-1, :]
    if noise_sigma > 0:
        x += noise_sigma * rng.standard_normal(x.shape)
    return x, y


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 50
    micro_batch: int = 10
    base_lr: float = 1e-4
    lr_decay: float = 1e-6
    noise_sigma: float = 0.02
    seed: int = 0
    collapse_patience: int = 10
    max_restarts: int = 5


@dataclass
class TrainResult:
    model: UNetModel
    train_loss: list[float]
    val_loss: list[float]
    optimizer: OptimizerState
    restarts: int = 0


def evaluate_loss(model: UNetModel, inputs: np.ndarray, targets: np.ndarray, batch: int = 10) -> float:
    total = 0.0
    for s in range(0, len(inputs), batch):
        pred = forward(model, inputs[s:s + batch], training=False)
        total += float(np.abs(pred - targets[s:s + batch]).sum())
    return total / targets.size


class _Collapsed(Exception):
    pass


def _reinitialize(model: UNetModel, seed: int) -> None:
    fresh = build_unet(model.config, seed)
    for store, new in ((model.weights, fresh.weights), (model.biases, fresh.biases)):
        for name, value in new.items():
            store[name][...] = value


def train(model: UNetModel, train_inputs: np.ndarray, train_targets: np.ndarray,
          val_inputs: np.ndarray | None = None, val_targets: np.ndarray | None = None,
          cfg: TrainConfig = TrainConfig(), callback=None) -> TrainResult:
    """Mini-batch training on pre-scaled (input, target) pairs.

    Each batch is split into ``micro_batch`` slices whose gradients are summed
    in a fixed order, which keeps memory flat without changing the update.

    With ReLU on the output, a network whose outputs all go negative receives
    exactly zero gradient and never recovers.  After ``collapse_patience``
    consecutive all-zero gradients the model is re-initialized in place from a
    seed derived from ``cfg.seed`` and training starts over, at most
    ``max_restarts`` times.
    """
    n = len(train_inputs)
    if n == 0 or train_inputs.shape != train_targets.shape:
        raise ValueError("training inputs and targets must be non-empty and equally shaped")
    for attempt in range(cfg.max_restarts + 1):
        if attempt:
            seed = int(np.random.SeedSequence([cfg.seed, 97, attempt]).generate_state(1)[0])
            log.warning("network output collapsed; restart %d from seed %d", attempt, seed)
            _reinitialize(model, seed)
        try:
            result = _train_once(model, train_inputs, train_targets, val_inputs, val_targets, cfg, callback)
        except _Collapsed as exc:
            last = exc
            continue
        result.restarts = attempt
        return result
    raise NumericalFailure(f"network output collapsed after {cfg.max_restarts} restarts ({last})")


def _train_once(model, train_inputs, train_targets, val_inputs, val_targets, cfg, callback) -> TrainResult:
    n = len(train_inputs)
    state = OptimizerState(base_lr=cfg.base_lr, lr_decay=cfg.lr_decay)
    params = model.parameters()
    history, val_history = [], []
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 41]))
    batch_no = 0
    zero_run = 0
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            x, y = augment(train_inputs[idx], train_targets[idx], rng_seed=cfg.seed * 1_000_003 + batch_no,
                           noise_sigma=cfg.noise_sigma)
            count = y.size
            grads = None
            loss = 0.0
            for m0 in range(0, len(idx), cfg.micro_batch):
                xs, ys = x[m0:m0 + cfg.micro_batch], y[m0:m0 + cfg.micro_batch]
                pred = forward(model, xs, training=True, rng_seed=cfg.seed * 7919 + batch_no * 131 + m0)
                loss += float(np.abs(pred - ys).sum())
                g = backward(model, loss_gradient(pred, ys, count))
                grads = g if grads is None else [a + b for a, b in zip(grads, g)]
            model._cache = None
            loss /= count
            if not np.isfinite(loss):
                raise NumericalFailure(f"non-finite loss at batch {batch_no} (epoch {epoch})")
            zero_run = zero_run + 1 if not any(g.any() for g in grads) else 0
            if cfg.collapse_patience and zero_run >= cfg.collapse_patience:
                raise _Collapsed(f"{zero_run} zero-gradient batches ending at batch {batch_no}")
            rmsprop_step(params, grads, state)
            epoch_loss += loss * len(idx)
            batch_no += 1
        history.append(epoch_loss / n)
        if val_inputs is not None and len(val_inputs):
            val_history.append(evaluate_loss(model, val_inputs, val_targets))
        log.info("epoch %d train %.5f val %s", epoch, history[-1], val_history[-1] if val_history else "-")
        if callback is not None:
            callback(epoch, history[-1], val_history[-1] if val_history else None)
    return TrainResult(model, history, val_history, state)
