"""Training loop, inference and the weight-file container."""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import ConfigMismatch, DivergedLoss, ShapeMismatch, ValidationError, WeightFileError
from .losses import _name, torch_loss
from .metrics import SegMetrics, metrics_from_counts
from .model import UNet, UNetConfig, build_model

HISTORY_FIELDS = ("epoch", "loss", "val_dsc", "val_jsc", "val_precision", "val_recall", "val_f1")


@dataclass(frozen=True)
class TrainHyper:
    loss: str = "logdice"
    optimizer: str = "adam"
    learning_rate: float = 1e-4
    batch_size: int = 4
    epochs: int = 100
    augment_factor: int = 0
    threshold: float = 0.5
    dice_smooth: float = 1.0
    # optimizer constants of the original framework defaults
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-7
    rmsprop_rho: float = 0.9
    rmsprop_eps: float = 1e-7

    def validate(self) -> "TrainHyper":
        _name(self.loss)
        if self.optimizer.lower() not in ("adam", "rmsprop"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValidationError("batch_size must be >= 1 and epochs >= 0")
        if not 0 < self.threshold < 1:
            raise ValidationError("threshold must lie in (0, 1)")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class SegModel:
    """A network together with its configuration and training history."""

    config: UNetConfig
    net: UNet
    history: list = field(default_factory=list)

    @classmethod
    def build(cls, config: UNetConfig) -> "SegModel":
        return cls(config, build_model(config))


def _as_batch(images, size=None) -> torch.Tensor:
    arr = np.asarray(images, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim == 3:
        arr = arr[:, None]
    if arr.ndim != 4 or arr.shape[1] != 1:
        raise ShapeMismatch(f"expected [N][H][W] images, got shape {np.shape(images)}")
    if size is not None and arr.shape[2:] != (size, size):
        raise ShapeMismatch(f"images are {arr.shape[2:]}, model expects {(size, size)}")
    return torch.from_numpy(np.ascontiguousarray(arr))


def _optimizer(net, hyper: TrainHyper):
    if hyper.optimizer.lower() == "adam":
        return torch.optim.Adam(net.parameters(), lr=hyper.learning_rate,
                                betas=(hyper.adam_beta1, hyper.adam_beta2), eps=hyper.adam_eps)
    return torch.optim.RMSprop(net.parameters(), lr=hyper.learning_rate,
                               alpha=hyper.rmsprop_rho, eps=hyper.rmsprop_eps)


def predict(model: SegModel, images, batch_size: int = 16) -> np.ndarray:
    """Per-pixel LV probabilities, ``[N][H][W]`` float32 in [0, 1]."""
    x = _as_batch(images, model.config.input_size)
    net = model.net
    was_training = net.training
    net.eval()
    out = []
    with torch.no_grad():
        for i in range(0, len(x), batch_size):
            out.append(net(x[i:i + batch_size])[:, 0].numpy())
    net.train(was_training)
    if not out:
        return np.zeros((0,) + tuple(x.shape[2:]), dtype=np.float32)
    return np.concatenate(out)


def binarize(prob_map, threshold: float = 0.5) -> np.ndarray:
    """1 where the probability is strictly above ``threshold``."""
    return (np.asarray(prob_map) > threshold).astype(np.uint8)


def evaluate(model: SegModel, images, masks, threshold: float = 0.5) -> SegMetrics:
    """Pooled pixel metrics over a whole validation set."""
    pred = binarize(predict(model, images), threshold).astype(bool)
    true = np.asarray(masks).astype(bool).reshape(pred.shape)
    return metrics_from_counts(int((pred & true).sum()), int(true.sum()), int(pred.sum()))


def train(model: SegModel, train_set, val_set, hyper: TrainHyper, seed: int | None = None,
          callback=None):
    """Fit ``model`` in place; returns ``(model, history)``.

    ``train_set`` and ``val_set`` are ``(images, masks)`` pairs of ``[N][H][W]``
    arrays. History rows hold the mean training loss and pooled validation
    metrics of each epoch. ``callback(row)`` may return True to stop early.
    """
    hyper.validate()
    x_train = _as_batch(train_set[0], model.config.input_size)
    y_train = _as_batch(train_set[1], model.config.input_size)
    if len(x_train) == 0:
        raise ValidationError("training set is empty")
    if len(x_train) != len(y_train):
        raise ShapeMismatch("train images and masks differ in count")
    seed = model.config.seed if seed is None else seed
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    net = model.net
    opt = _optimizer(net, hyper)
    history = model.history
    for epoch in range(1, hyper.epochs + 1):
        net.train()
        order = rng.permutation(len(x_train))
        total, count = 0.0, 0
        for i in range(0, len(order), hyper.batch_size):
            idx = torch.from_numpy(order[i:i + hyper.batch_size])
            xb, yb = x_train[idx], y_train[idx]
            opt.zero_grad()
            loss = torch_loss(hyper.loss, yb, net(xb), hyper.dice_smooth)
            if not torch.isfinite(loss):
                raise DivergedLoss(f"loss became {loss.item()} at epoch {epoch}")
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
            count += len(idx)
        row = {"epoch": epoch, "loss": total / count}
        if val_set is not None and len(val_set[0]):
            m = evaluate(model, val_set[0], val_set[1], hyper.threshold)
            row.update({f"val_{k}": v for k, v in m.as_dict().items()})
        else:
            row.update({f"val_{k}": math.nan for k in ("dsc", "jsc", "precision", "recall", "f1")})
        history.append(row)
        if callback is not None and callback(row):
            break
    return model, history


def write_history_csv(history, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS, extrasaction="ignore")
        w.writeheader()
        for row in history:
            w.writerow(row)


# -- weight container ----------------------------------------------------------
# layout: b"LVUNETW\0" | u32 version | u32 header length | JSON header | float32 LE blobs
_MAGIC = b"LVUNETW\x00"
_VERSION = 1


def save_weights(model: SegModel, path) -> None:
    state = model.net.state_dict()
    arrays = []
    blobs = []
    for name, tensor in state.items():
        arr = tensor.detach().cpu().numpy()
        arrays.append({"name": name, "shape": list(arr.shape), "dtype": str(arr.dtype)})
        blobs.append(arr.astype("<f4").tobytes())
    header = json.dumps({"config": model.config.to_dict(), "arrays": arrays}).encode()
    try:
        with open(path, "wb") as fh:
            fh.write(_MAGIC + struct.pack("<II", _VERSION, len(header)) + header)
            for b in blobs:
                fh.write(b)
    except OSError as exc:
        raise WeightFileError(f"cannot write weights to {path}: {exc}") from exc


def load_weights(path, model: SegModel | None = None) -> SegModel:
    """Read a weight file; when ``model`` is given its config must match."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise WeightFileError(f"cannot read {path}: {exc}") from exc
    if raw[:8] != _MAGIC or len(raw) < 16:
        raise WeightFileError(f"{path} is not a weight file")
    version, hlen = struct.unpack_from("<II", raw, 8)
    if version != _VERSION:
        raise WeightFileError(f"unsupported weight file version {version}")
    try:
        header = json.loads(raw[16:16 + hlen])
        config = UNetConfig.from_dict(header["config"])
        specs = header["arrays"]
    except (ValueError, KeyError, TypeError) as exc:
        raise WeightFileError(f"corrupt weight header in {path}") from exc
    if model is not None and model.config != config:
        raise ConfigMismatch(f"file holds {config}, model is {model.config}")
    target = model or SegModel.build(config)
    pos = 16 + hlen
    state = {}
    for spec in specs:
        n = int(np.prod(spec["shape"])) * 4
        if pos + n > len(raw):
            raise WeightFileError(f"{path} is truncated")
        arr = np.frombuffer(raw, dtype="<f4", count=n // 4, offset=pos).reshape(spec["shape"])
        state[spec["name"]] = torch.from_numpy(arr.astype(spec["dtype"]))
        pos += n
    if pos != len(raw):
        raise WeightFileError(f"{path} has {len(raw) - pos} trailing bytes")
    try:
        target.net.load_state_dict(state)
    except RuntimeError as exc:
        raise WeightFileError(f"weights in {path} do not fit the network: {exc}") from exc
    return target
