from .augment import AugmentConfig, augment, augment_volume, channel_upper_bounds, flip_channel_permutation
from .layers import BatchNorm, Conv, Dense, Dropout, GlobalAvgPool, ReLU, softmax, softmax_cross_entropy
from .model import (
    ClassifierConfig,
    ShallowConvNet,
    checkpoint_bytes,
    init_model,
    predict,
    read_checkpoint,
    write_checkpoint,
)
from .optim import Adam, exponential_lr
from .train import EpochStats, evaluate_accuracy, history_csv, train

__all__ = [
    "Adam",
    "AugmentConfig",
    "BatchNorm",
    "ClassifierConfig",
    "Conv",
    "Dense",
    "Dropout",
    "EpochStats",
    "GlobalAvgPool",
    "ReLU",
    "ShallowConvNet",
    "augment",
    "augment_volume",
    "channel_upper_bounds",
    "checkpoint_bytes",
    "evaluate_accuracy",
    "exponential_lr",
    "flip_channel_permutation",
    "history_csv",
    "init_model",
    "predict",
    "read_checkpoint",
    "softmax",
    "softmax_cross_entropy",
    "train",
    "write_checkpoint",
]
