"""The ACCOR classification network."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .layers import (
    complex_avg_pool,
    complex_batchnorm_forward,
    complex_conv_forward,
    crelu,
    multi_head_attention,
    realify_project,
)
from .network import AccorNetwork, ModelConfig, forward, predict_logits

__all__ = [
    "AccorNetwork",
    "CheckpointError",
    "ModelConfig",
    "complex_avg_pool",
    "complex_batchnorm_forward",
    "complex_conv_forward",
    "crelu",
    "forward",
    "load_checkpoint",
    "multi_head_attention",
    "predict_logits",
    "realify_project",
    "save_checkpoint",
]
