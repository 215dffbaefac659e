"""Markovian patch discriminator: five 4×4 convolutions scoring overlapping patches."""
from typing import List, Optional, Sequence

import numpy as np

from points2pix.exceptions import ParameterError, ShapeError
from points2pix.schemas.training import NetworkPreset
from points2pix.tensor import functional as F
from points2pix.tensor.nn import Conv2d, Module, make_norm
from points2pix.tensor.tensor import Tensor, default_dtype

KERNEL = 4
PADDING = 1


class Discriminator(Module):
    """Layer 1 conv + LeakyReLU, layers 2-4 conv + norm + LeakyReLU, layer 5 conv to one channel.

    Unconditional by default; with `conditional` the composed condition image is
    concatenated to the input channels.
    """

    def __init__(self, preset: NetworkPreset, rng: np.random.Generator, conditional: bool = False,
                 condition_channels: int = 3, norm: str = "instance"):
        super().__init__()
        self.conditional = conditional
        self.channels: Sequence[int] = preset.discriminator_channels
        self.strides: Sequence[int] = preset.discriminator_strides
        self.in_channels = 3 + (condition_channels if conditional else 0)
        self.convs: List[Conv2d] = []
        self.norms: List[Module] = []
        previous = self.in_channels
        last = len(self.channels) - 1
        for i, (width, stride) in enumerate(zip(self.channels, self.strides)):
            self.convs.append(Conv2d(previous, width, KERNEL, rng, stride=stride, padding=PADDING))
            self.norms.append(make_norm("none" if i in (0, last) else norm, width))
            previous = width

    def receptive_field(self) -> int:
        field = 1
        for stride in reversed(self.strides):
            field = field * stride + (KERNEL - stride)
        return field

    def logits(self, image, condition=None) -> Tensor:
        x = image if isinstance(image, Tensor) else Tensor(image, dtype=default_dtype())
        if x.ndim != 4 or x.shape[1] != 3:
            raise ShapeError("discriminator", f"expected B×3×H×W images, got {x.shape}")
        if np.max(np.abs(x.data)) > 1.0 + 1e-6:
            raise ParameterError("image", "discriminator input must lie in [-1, 1]")
        if self.conditional:
            if condition is None:
                raise ParameterError("condition", "conditional discriminator needs the composed condition image")
            condition = condition if isinstance(condition, Tensor) else Tensor(condition, dtype=default_dtype())
            x = F.concat([x, condition], axis=1)
        last = len(self.convs) - 1
        for i, (conv, norm) in enumerate(zip(self.convs, self.norms)):
            x = norm(conv(x))
            if i != last:
                x = F.leaky_relu(x, 0.2)
        return x

    def forward(self, image, condition=None) -> Tensor:
        """Sigmoid patch scores, B×1×N×N (30×30 at 256 px input)."""
        return F.sigmoid(self.logits(image, condition))
