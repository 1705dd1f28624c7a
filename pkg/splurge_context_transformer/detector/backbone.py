"""
Tiny convolutional backbone.

Five 3x3 stride-2 convolutions with ReLU. The third, fourth and fifth
outputs are the detection feature maps; on a 64x64 image they are
8x8x32, 4x4x32 and 2x2x32.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import SplurgeContextTransformerDimensionError
from ..numerics import Tensor, add, conv2d, relu
from ..numerics.tensor import get_dtype

# Module domains
DOMAINS = ["detector", "backbone", "features"]

__all__ = [
    "ConvLayer",
    "BACKBONE_LAYERS",
    "FEATURE_TAPS",
    "FEATURE_CHANNELS",
    "Backbone",
    "init_conv",
    "backbone_forward",
]

# name, input channels, output channels
BACKBONE_LAYERS: tuple[tuple[str, int, int], ...] = (
    ("stem1", 3, 16),
    ("stem2", 16, 32),
    ("stem3", 32, 32),
    ("extra1", 32, 32),
    ("extra2", 32, 32),
)
FEATURE_TAPS = ("stem3", "extra1", "extra2")
FEATURE_CHANNELS = 32


@dataclass
class ConvLayer:
    """A k x k convolution with bias; ``weight`` is ``k x k x Cin x Cout``."""

    weight: Tensor
    bias: Tensor
    stride: int = 1
    padding: int = 1

    def __call__(self, x: Tensor) -> Tensor:
        return add(conv2d(x, self.weight, self.stride, self.padding), self.bias)

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


def init_conv(
    name: str,
    in_channels: int,
    out_channels: int,
    rng: np.random.Generator,
    *,
    stride: int = 1,
    kernel: int = 3,
    bias: float = 0.0,
) -> ConvLayer:
    """He-normal weights, constant bias."""
    std = np.sqrt(2.0 / (kernel * kernel * in_channels))
    dtype = get_dtype()
    weight = Tensor(
        rng.normal(0.0, std, (kernel, kernel, in_channels, out_channels)),
        requires_grad=True,
        dtype=dtype,
        name=f"{name}.weight",
    )
    bias_tensor = Tensor(np.full(out_channels, bias), requires_grad=True, dtype=dtype, name=f"{name}.bias")
    return ConvLayer(weight, bias_tensor, stride=stride, padding=kernel // 2)


@dataclass
class Backbone:
    layers: dict[str, ConvLayer]
    image_size: int

    @classmethod
    def create(cls, rng: np.random.Generator, image_size: int = 64) -> Backbone:
        layers = {
            name: init_conv(f"backbone.{name}", cin, cout, rng, stride=2) for name, cin, cout in BACKBONE_LAYERS
        }
        return cls(layers, image_size)

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers.values() for p in layer.parameters()]

    def feature_grids(self) -> tuple[tuple[int, int], ...]:
        """Spatial size of each tapped feature map for this backbone's image size."""
        size = self.image_size
        grids = []
        for name, _, _ in BACKBONE_LAYERS:
            size = (size + 2 - 3) // 2 + 1
            if name in FEATURE_TAPS:
                grids.append((size, size))
        return tuple(grids)


def backbone_forward(image: Tensor | np.ndarray, backbone: Backbone) -> list[Tensor]:
    """Feature maps at every tap, in ascending-scale order (finest first).

    Raises:
        SplurgeContextTransformerDimensionError: If the image is not ``S x S x 3`` for the configured size
    """
    x = image if isinstance(image, Tensor) else Tensor(image)
    expected = (backbone.image_size, backbone.image_size, 3)
    if x.shape != expected:
        raise SplurgeContextTransformerDimensionError(f"Backbone expects an image of shape {expected}, got {x.shape}")
    features: list[Tensor] = []
    for name, _, _ in BACKBONE_LAYERS:
        x = relu(backbone.layers[name](x))
        if name in FEATURE_TAPS:
            features.append(x)
    return features
