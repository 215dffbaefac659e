"""UNet generator with the point feature fused at the 1×1 bottleneck.

Variants:
    full           encoder(compose(c2, c3)) ++ pointnet(c1) -> 1×1 conv -> decoder with skips
    unet_only      encoder(compose(c2, c3)) -> decoder with skips
    pointnet_only  1×1 conv of pointnet(c1) -> decoder without skips
"""
from typing import List, Optional, Sequence, Tuple

import numpy as np

from points2pix.exceptions import ParameterError, ShapeError
from points2pix.schemas.training import NetworkPreset
from points2pix.models.pointnet import PointNet
from points2pix.tensor import functional as F
from points2pix.tensor.nn import Conv2d, ConvTranspose2d, Identity, Module, make_norm
from points2pix.tensor.tensor import Tensor, default_dtype

VARIANTS = ("full", "unet_only", "pointnet_only")
FEATURE_WIDTH = 1024


class EncoderLevel(Module):
    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 norm: str, activate: bool):
        super().__init__()
        self.activate = activate
        self.conv = Conv2d(in_channels, out_channels, 4, rng, stride=2, padding=1)
        self.norm = make_norm(norm, out_channels)

    def forward(self, x: Tensor) -> Tensor:
        if self.activate:
            x = F.leaky_relu(x, 0.2)
        return self.norm(self.conv(x))


class DecoderLevel(Module):
    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 norm: str, dropout: float):
        super().__init__()
        self.dropout = dropout
        self.upconv = ConvTranspose2d(in_channels, out_channels, 4, rng, stride=2, padding=1)
        self.norm = make_norm(norm, out_channels)

    def forward(self, x: Tensor, rng: Optional[np.random.Generator]) -> Tensor:
        out = self.norm(self.upconv(F.relu(x)))
        return F.dropout(out, self.dropout, rng)


class Generator(Module):
    def __init__(self, preset: NetworkPreset, rng: np.random.Generator, variant: str = "full",
                 in_channels: int = 3, dropout_p: Optional[float] = None,
                 dropout_at_inference: bool = True, input_transform: bool = False,
                 num_points: int = 1024, norm: str = "instance"):
        super().__init__()
        if variant not in VARIANTS:
            raise ParameterError("variant", f"expected one of {VARIANTS}, got {variant!r}")
        self.variant = variant
        self.resolution = preset.resolution
        self.in_channels = in_channels
        self.dropout_at_inference = dropout_at_inference
        p = preset.dropout_p if dropout_p is None else dropout_p
        channels = list(preset.encoder_channels)
        levels = len(channels)
        bottleneck = channels[-1]

        self.encoder: List[EncoderLevel] = []
        if variant != "pointnet_only":
            previous = in_channels
            for i, width in enumerate(channels):
                inner = i == levels - 1
                self.encoder.append(EncoderLevel(previous, width, rng,
                                                 norm="none" if i == 0 or inner else norm, activate=i > 0))
                previous = width

        self.pointnet = None
        self.fusion = None
        if variant in ("full", "pointnet_only"):
            self.pointnet = PointNet(rng, widths=preset.pointnet_widths, input_transform=input_transform,
                                     num_points=num_points)
            fused = bottleneck + FEATURE_WIDTH if variant == "full" else FEATURE_WIDTH
            self.fusion = Conv2d(fused, bottleneck, 1, rng)

        skips = variant != "pointnet_only"
        self.decoder: List[DecoderLevel] = []
        for k in range(levels - 1):
            source = channels[levels - 1 - k]
            target = channels[levels - 2 - k]
            in_width = source if (k == 0 or not skips) else 2 * source
            self.decoder.append(DecoderLevel(in_width, target, rng, norm=norm,
                                             dropout=p if k < preset.dropout_levels else 0.0))
        self.output = ConvTranspose2d(2 * channels[0] if skips else channels[0], 3, 4, rng, stride=2, padding=1)
        self.skips = skips

    # Encoder / decoder halves, exposed so skip connectivity can be probed
    def encode(self, image: Tensor) -> List[Tensor]:
        """Feature map of every encoder level, outermost first; the last is the 1×1 bottleneck."""
        if not self.encoder:
            raise ParameterError("variant", "pointnet_only generators have no image encoder")
        features = []
        x = image
        for level in self.encoder:
            x = level(x)
            features.append(x)
        return features

    def fuse(self, bottleneck: Optional[Tensor], feature: Optional[Tensor]) -> Tensor:
        if self.variant == "unet_only":
            return bottleneck
        column = feature.reshape(feature.shape[0], FEATURE_WIDTH, 1, 1)
        if self.variant == "pointnet_only":
            return self.fusion(column)
        return self.fusion(F.concat([bottleneck, column], axis=1))

    def decode(self, bottleneck: Tensor, skips: Sequence[Tensor] = (),
               rng: Optional[np.random.Generator] = None) -> Tensor:
        """Decoder from the (fused) bottleneck; `skips` are the encoder maps outermost first."""
        if self.skips and len(skips) != len(self.decoder) + 1:
            raise ShapeError("decode", f"expected {len(self.decoder) + 1} skip maps, got {len(skips)}")
        active = self.training or self.dropout_at_inference
        dropout_rng = (rng or np.random.default_rng(0)) if active else None
        x = bottleneck
        for k, level in enumerate(self.decoder):
            x = level(x, dropout_rng)
            if self.skips:
                x = F.concat([x, skips[len(skips) - 2 - k]], axis=1)
        return F.tanh(self.output(F.relu(x)))

    def forward(self, image: Optional[Tensor] = None, points: Optional[np.ndarray] = None,
                rng: Optional[np.random.Generator] = None) -> Tensor:
        """B×C×H×W composite in [-1, 1] and/or B×n×3 points -> B×3×H×W fake in [-1, 1]."""
        needs_image = self.variant != "pointnet_only"
        needs_points = self.variant != "unet_only"
        if needs_image and image is None:
            raise ParameterError("image", f"the {self.variant} variant needs the composed c2/c3 input")
        if needs_points and points is None:
            raise ParameterError("points", f"the {self.variant} variant needs the c1 point set")

        features: List[Tensor] = []
        bottleneck = None
        if needs_image:
            image = image if isinstance(image, Tensor) else Tensor(image, dtype=default_dtype())
            expected = (self.in_channels, self.resolution, self.resolution)
            if tuple(image.shape[1:]) != expected:
                raise ShapeError("generator", f"expected B×{expected[0]}×{expected[1]}×{expected[2]}, got {image.shape}")
            features = self.encode(image)
            bottleneck = features[-1]
        feature = self.pointnet(points) if needs_points else None
        return self.decode(self.fuse(bottleneck, feature), features, rng)

    def parameter_groups(self) -> Tuple[List, List]:
        """(image branch parameters, point branch parameters)."""
        point = [p for name, p in self.named_parameters() if name.startswith("pointnet.")]
        ids = {id(p) for p in point}
        return [p for p in self.parameters() if id(p) not in ids], point
