from .data import affine_pair, augment, split_patients
from .losses import loss_grad, loss_value, soft_dice, torch_loss
from .metrics import SegMetrics, seg_metrics
from .model import UNet, UNetConfig, build_model, count_parameters, layer_summary
from .train import (SegModel, TrainHyper, binarize, evaluate, load_weights, predict, save_weights,
                    train, write_history_csv)

__all__ = [
    "SegMetrics",
    "SegModel",
    "TrainHyper",
    "UNet",
    "UNetConfig",
    "affine_pair",
    "augment",
    "binarize",
    "build_model",
    "count_parameters",
    "evaluate",
    "layer_summary",
    "load_weights",
    "loss_grad",
    "loss_value",
    "predict",
    "save_weights",
    "seg_metrics",
    "soft_dice",
    "split_patients",
    "torch_loss",
    "train",
    "write_history_csv",
]
