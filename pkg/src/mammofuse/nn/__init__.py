"""Trainable model, optimizer, schedules, and the training loop."""

from .model import (
    BackboneSpec,
    ConvParams,
    HeadParams,
    ModelParams,
    backward_batch,
    forward_batch,
    head_forward,
    init_params,
)
from .optim import (
    AdamState,
    TrainConfig,
    adam_step,
    bce_with_logits,
    lr_at,
    sigmoid,
    smooth_label,
    unfreeze_plan,
)
from .train import (
    EpochStats,
    TrainResult,
    load_checkpoint,
    predict_scores,
    save_checkpoint,
    train,
    trainable_param_count,
    write_history_csv,
)

__all__ = [
    "AdamState",
    "BackboneSpec",
    "ConvParams",
    "EpochStats",
    "HeadParams",
    "ModelParams",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "backward_batch",
    "bce_with_logits",
    "forward_batch",
    "head_forward",
    "init_params",
    "load_checkpoint",
    "lr_at",
    "predict_scores",
    "save_checkpoint",
    "sigmoid",
    "smooth_label",
    "train",
    "trainable_param_count",
    "unfreeze_plan",
    "write_history_csv",
]
