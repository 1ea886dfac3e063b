"""Configurable U-Net.

The 23-layer configuration reproduces the Keras model summary layer for
layer: two 3x3 convs per encoder stage, 2x2 max-pooling, a two-conv bridge,
then per decoder stage dropout -> 2x nearest upsampling -> 2x2 conv that
halves the channels -> concatenation with the encoder output -> two 3x3
convs, and a final 1x1 conv with a sigmoid. The 18- and 28-layer variants
drop or add one encoder/decoder stage pair.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import InvalidConfig

# conv_layers -> number of pooling stages
DEPTHS = {18: 3, 23: 4, 28: 5}


@dataclass(frozen=True)
class UNetConfig:
    input_size: int = 176
    base_filters: int = 64
    conv_layers: int = 23
    dropout_rate: float = 0.5
    batch_norm: bool = False
    seed: int = 0
    in_channels: int = 1

    def validate(self) -> "UNetConfig":
        if self.conv_layers not in DEPTHS:
            raise InvalidConfig(f"conv_layers must be one of {sorted(DEPTHS)}, got {self.conv_layers}")
        if self.base_filters < 1:
            raise InvalidConfig("base_filters must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfig("dropout_rate must lie in [0, 1)")
        step = 2 ** self.depth
        if self.input_size <= 0 or self.input_size % step:
            raise InvalidConfig(
                f"input_size {self.input_size} must be a positive multiple of {step} "
                f"for a {self.conv_layers}-layer network")
        return self

    @property
    def depth(self) -> int:
        return DEPTHS[self.conv_layers]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "UNetConfig":
        fields = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in fields})


class _Conv(nn.Module):
    """Conv2D with Keras 'same' padding, optional batch norm, optional ReLU."""

    def __init__(self, c_in, c_out, k, batch_norm=False, activation=True):
        super().__init__()
        self.k = k
        self.conv = nn.Conv2d(c_in, c_out, k, padding=0)
        self.bn = nn.BatchNorm2d(c_out, eps=1e-3, momentum=0.01) if batch_norm else None
        self.activation = activation

    def forward(self, x):
        # Keras pads the extra row/col on the bottom/right for even kernels.
        total = self.k - 1
        lead = total // 2
        if total:
            x = F.pad(x, (lead, total - lead, lead, total - lead))
        x = self.conv(x)
        if self.bn is not None:
            x = self.bn(x)
        if self.activation:
            x = F.relu(x)
        return x


class UNet(nn.Module):
    def __init__(self, config: UNetConfig):
        super().__init__()
        self.config = config.validate()
        depth = config.depth
        widths = [config.base_filters * 2 ** i for i in range(depth + 1)]
        bn = config.batch_norm
        convs = []
        c_in = config.in_channels
        for w in widths:  # encoder stages, then the bridge
            convs.append(_Conv(c_in, w, 3, bn))
            convs.append(_Conv(w, w, 3, bn))
            c_in = w
        for w in reversed(widths[:-1]):
            convs.append(_Conv(c_in, w, 2, bn))
            convs.append(_Conv(2 * w, w, 3, bn))
            convs.append(_Conv(w, w, 3, bn))
            c_in = w
        convs.append(_Conv(c_in, 1, 1, activation=False))
        self.convs = nn.ModuleList(convs)
        self.dropout = nn.Dropout(config.dropout_rate) if config.dropout_rate > 0 else None

    def forward(self, x):
        depth = self.config.depth
        it = iter(self.convs)
        skips = []
        for stage in range(depth + 1):
            x = next(it)(x)
            x = next(it)(x)
            if stage < depth:
                skips.append(x)
                x = F.max_pool2d(x, 2)
        for skip in reversed(skips):
            if self.dropout is not None:
                x = self.dropout(x)
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = next(it)(x)
            x = torch.cat([skip, x], dim=1)
            x = next(it)(x)
            x = next(it)(x)
        return torch.sigmoid(next(it)(x))


def count_parameters(module: nn.Module, trainable_only: bool = True) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad or not trainable_only)


def layer_summary(config: UNetConfig) -> list[dict]:
    """Keras-style per-layer rows: name, type, output shape, param count, inputs.

    Computed symbolically from the config; no network is instantiated.
    Shapes are ``(None, H, W, C)`` as Keras prints them.
    """
    config.validate()
    rows: list[dict] = []
    counters: dict[str, int] = {}

    def add(kind, keras_type, shape, params, inputs):
        counters[kind] = counters.get(kind, 0) + 1
        name = f"{kind}_{counters[kind]}"
        rows.append({"name": name, "type": keras_type, "output_shape": (None, *shape),
                     "params": params, "connected_to": list(inputs)})
        return name

    def conv(prev, c_in, c_out, k, size):
        name = add("conv2d", "Conv2D", (size, size, c_out), (k * k * c_in + 1) * c_out, [prev])
        if config.batch_norm and k != 1:
            name = add("batch_normalization", "BatchNormalization", (size, size, c_out), 4 * c_out, [name])
        return name

    depth = config.depth
    widths = [config.base_filters * 2 ** i for i in range(depth + 1)]
    size = config.input_size
    prev, c = "input_1", config.in_channels
    skips = []
    for stage, w in enumerate(widths):
        prev = conv(prev, c, w, 3, size)
        prev = conv(prev, w, w, 3, size)
        c = w
        if stage < depth:
            skips.append((prev, w, size))
            size //= 2
            prev = add("max_pooling2d", "MaxPooling2D", (size, size, w), 0, [prev])
    for skip_name, w, skip_size in reversed(skips):
        if config.dropout_rate > 0:
            prev = add("dropout", "Dropout", (size, size, c), 0, [prev])
        size *= 2
        prev = add("up_sampling2d", "UpSampling2D", (size, size, c), 0, [prev])
        prev = conv(prev, c, w, 2, size)
        prev = add("concatenate", "Concatenate", (size, size, 2 * w), 0, [skip_name, prev])
        prev = conv(prev, 2 * w, w, 3, size)
        prev = conv(prev, w, w, 3, size)
        c = w
    conv(prev, c, 1, 1, size)
    return rows


def build_model(config: UNetConfig) -> UNet:
    """Instantiate a U-Net with weights initialised from ``config.seed``."""
    config.validate()
    gen_state = torch.random.get_rng_state()
    torch.manual_seed(config.seed)
    try:
        model = UNet(config)
        for m in model.modules():
            if isinstance(m, nn.Conv2d):
                # Keras defaults: glorot-uniform kernels, zero bias
                nn.init.xavier_uniform_(m.weight)
                nn.init.zeros_(m.bias)
    finally:
        torch.random.set_rng_state(gen_state)
    return model
