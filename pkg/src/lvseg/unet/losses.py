"""Segmentation losses with closed-form gradients.

Two implementations live here: numpy versions with explicit analytic
gradients (used for checking) and torch versions used during training.
Dice is computed over the whole batch, i.e. one soft intersection and one
soft total over every pixel of every sample.
"""
from __future__ import annotations

import numpy as np
import torch

from ..errors import ShapeMismatch, ValidationError

LOSSES = ("bce", "dice", "logdice", "bce_dice")
BCE_EPS = 1e-7  # probabilities are clipped to [eps, 1 - eps] like Keras


def _check(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape:
        raise ShapeMismatch(f"y_true {y_true.shape} vs y_pred {y_pred.shape}")
    return y_true, y_pred


def _name(name: str) -> str:
    key = name.lower().replace("+", "_").replace("-", "_")
    key = {"bceplusdice": "bce_dice", "log_dice": "logdice", "binary_crossentropy": "bce"}.get(key, key)
    if key not in LOSSES:
        raise ValidationError(f"unknown loss {name!r}; choose from {LOSSES}")
    return key


def soft_dice(y_true, y_pred, smooth: float = 1.0) -> float:
    y_true, y_pred = _check(y_true, y_pred)
    inter = (y_true * y_pred).sum()
    return (2 * inter + smooth) / (y_true.sum() + y_pred.sum() + smooth)


def _soft_dice_grad(y_true, y_pred, smooth):
    inter = (y_true * y_pred).sum()
    denom = y_true.sum() + y_pred.sum() + smooth
    return (2 * y_true * denom - (2 * inter + smooth)) / denom ** 2


def loss_value(name: str, y_true, y_pred, smooth: float = 1.0) -> float:
    """Scalar loss; ``smooth`` is the Dice smoothing constant."""
    key = _name(name)
    y_true, y_pred = _check(y_true, y_pred)
    total = 0.0
    if key in ("bce", "bce_dice"):
        p = np.clip(y_pred, BCE_EPS, 1 - BCE_EPS)
        total += float(-np.mean(y_true * np.log(p) + (1 - y_true) * np.log(1 - p)))
    if key in ("dice", "bce_dice"):
        total += 1.0 - soft_dice(y_true, y_pred, smooth)
    if key == "logdice":
        total += -np.log(soft_dice(y_true, y_pred, smooth))
    return float(total)


def loss_grad(name: str, y_true, y_pred, smooth: float = 1.0) -> np.ndarray:
    """Analytic derivative of :func:`loss_value` with respect to ``y_pred``."""
    key = _name(name)
    y_true, y_pred = _check(y_true, y_pred)
    grad = np.zeros_like(y_pred)
    if key in ("bce", "bce_dice"):
        inside = (y_pred > BCE_EPS) & (y_pred < 1 - BCE_EPS)
        p = np.clip(y_pred, BCE_EPS, 1 - BCE_EPS)
        grad += np.where(inside, (p - y_true) / (p * (1 - p)), 0.0) / y_pred.size
    if key in ("dice", "bce_dice"):
        grad -= _soft_dice_grad(y_true, y_pred, smooth)
    if key == "logdice":
        grad -= _soft_dice_grad(y_true, y_pred, smooth) / soft_dice(y_true, y_pred, smooth)
    return grad


def torch_loss(name: str, y_true: torch.Tensor, y_pred: torch.Tensor, smooth: float = 1.0):
    """Differentiable torch counterpart of :func:`loss_value`."""
    key = _name(name)
    if y_true.shape != y_pred.shape:
        raise ShapeMismatch(f"y_true {tuple(y_true.shape)} vs y_pred {tuple(y_pred.shape)}")
    total = y_pred.new_zeros(())
    if key in ("bce", "bce_dice"):
        p = y_pred.clamp(BCE_EPS, 1 - BCE_EPS)
        total = total - torch.mean(y_true * torch.log(p) + (1 - y_true) * torch.log(1 - p))
    if key in ("dice", "bce_dice", "logdice"):
        inter = (y_true * y_pred).sum()
        dsc = (2 * inter + smooth) / (y_true.sum() + y_pred.sum() + smooth)
        total = total + (1 - dsc if key != "logdice" else -torch.log(dsc))
    return total
