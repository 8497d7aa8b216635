"""Training: configuration, losses, sub-target extraction and the worker loop."""

from .config import ABLATIONS, ConfigError, TrainConfig, load_config, parse_config_text, update_config
from .losses import a3c_gradients, a3c_loss, action_accuracy, compute_returns, il_loss, il_update
from .train import Checkpoint, TrainResult, read_checkpoint, train, write_checkpoint
from .tse import RELABELED_REWARD, candidate_indices, novel_categories, target_categories, tse_extract

__all__ = [
    "ABLATIONS",
    "Checkpoint",
    "ConfigError",
    "RELABELED_REWARD",
    "TrainConfig",
    "TrainResult",
    "a3c_gradients",
    "a3c_loss",
    "action_accuracy",
    "candidate_indices",
    "compute_returns",
    "il_loss",
    "il_update",
    "load_config",
    "novel_categories",
    "parse_config_text",
    "read_checkpoint",
    "target_categories",
    "train",
    "tse_extract",
    "update_config",
    "write_checkpoint",
]
