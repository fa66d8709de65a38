"""Learned coordinate-wise step sizes for BFGS."""

from .adam import AdamMoments, adam_step, clip_global_norm
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .model import (
    L2OModel,
    L2ORunState,
    init_run_state,
    l2o_backward,
    l2o_forward,
    meta_loss,
    meta_loss_seed,
)
from .strategy import L2OStrategy
from .train import MetaConfig, ProblemSampler, TrainResult, train, write_training_log

__all__ = [
    "AdamMoments", "adam_step", "clip_global_norm",
    "CheckpointError", "load_checkpoint", "save_checkpoint",
    "L2OModel", "L2ORunState", "init_run_state", "l2o_backward", "l2o_forward",
    "meta_loss", "meta_loss_seed", "L2OStrategy",
    "MetaConfig", "ProblemSampler", "TrainResult", "train", "write_training_log",
]
