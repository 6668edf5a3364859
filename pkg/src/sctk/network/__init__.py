from .dsir import dsir_reconstruct, refine
from .training import (OptimizerState, TrainConfig, TrainResult, augment, evaluate_loss, loss_gradient,
                       mae_loss, rmsprop_step, train)
from .unet import (StateError, UNetConfig, UNetModel, backward, build_unet, checkpoint_metadata, forward,
                   layer_specs, load_checkpoint, save_checkpoint)

__all__ = [
    "OptimizerState", "StateError", "TrainConfig", "TrainResult", "UNetConfig", "UNetModel", "augment",
    "backward", "build_unet", "checkpoint_metadata", "dsir_reconstruct", "evaluate_loss", "forward", "layer_specs",
    "load_checkpoint", "loss_gradient", "mae_loss", "refine", "rmsprop_step", "save_checkpoint", "train",
]
