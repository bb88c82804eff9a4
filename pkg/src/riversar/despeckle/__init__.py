"""Self-supervised despeckler: loss, network, training protocol, inference."""
from .loss import EXP_CLAMP, ft_loss, ft_loss_grad, ft_loss_torch
from .model import (CheckpointError, DenoiserModel, UNet, create_model, despeckle,
                    forward, load_checkpoint, save_checkpoint)
from .train import (AcquisitionStack, TrainConfig, change_compensated_target,
                    train_step_a, train_step_b, train_step_c, validation_mse,
                    write_training_log)

__all__ = [
    "EXP_CLAMP", "ft_loss", "ft_loss_grad", "ft_loss_torch",
    "CheckpointError", "DenoiserModel", "UNet", "create_model", "despeckle",
    "forward", "load_checkpoint", "save_checkpoint",
    "AcquisitionStack", "TrainConfig", "change_compensated_target",
    "train_step_a", "train_step_b", "train_step_c", "validation_mse",
    "write_training_log",
]
