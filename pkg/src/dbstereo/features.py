"""Siamese multi-scale feature extractor.

A small residual CNN with strided downsampling stands in for a large
pretrained backbone; stages reach 1/32 resolution and an upsampling
cascade (nearest-neighbor upsample + 3x3 conv over the concatenated
skip) restores 1/16, 1/8 and 1/4 maps.  Both views share one set of
weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

STRIDE = 32

# per-variant channel counts: (base, C4, C8, C16, C32)
_VARIANT_CHANNELS = {
    "tiny": (16, 32, 48, 64, 96),
    "S": (24, 48, 64, 96, 128),
    "M": (32, 64, 96, 128, 160),
    "L": (48, 96, 128, 192, 256),
}


@dataclass(frozen=True)
class BackboneConfig:
    variant: str = "tiny"
    base_channels: int | None = None
    use_pretrained: bool = False

    def channels(self) -> tuple[int, int, int, int, int]:
        if self.variant not in _VARIANT_CHANNELS:
            raise ValueError(f"unknown backbone variant {self.variant!r}")
        base, c4, c8, c16, c32 = _VARIANT_CHANNELS[self.variant]
        if self.base_channels is not None:
            base = self.base_channels
        return base, c4, c8, c16, c32

    @property
    def level4_channels(self) -> int:
        return self.channels()[1]


@dataclass
class FeaturePyramid:
    """Feature maps at 1/4, 1/8 and 1/16 of the input resolution."""

    level_4: torch.Tensor
    level_8: torch.Tensor
    level_16: torch.Tensor


def conv_bn_relu(in_ch, out_ch, kernel=3, stride=1):
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=kernel // 2, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.LeakyReLU(0.1, inplace=True),
    )


class ResidualBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(channels)
        self.act = nn.LeakyReLU(0.1, inplace=True)

    def forward(self, x):
        out = self.act(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.act(out + x)


class UpMerge(nn.Module):
    """Nearest-neighbor upsample, concatenate the shallower skip, fuse with a 3x3 conv."""

    def __init__(self, deep_ch, skip_ch, out_ch):
        super().__init__()
        self.fuse = conv_bn_relu(deep_ch + skip_ch, out_ch)

    def forward(self, deep, skip):
        deep = F.interpolate(deep, size=skip.shape[-2:], mode="nearest")
        return self.fuse(torch.cat((deep, skip), dim=1))


class FeatureExtractor(nn.Module):
    """Shared-weight pyramid extractor; forward maps one image to a pyramid."""

    def __init__(self, cfg: BackboneConfig = BackboneConfig()):
        super().__init__()
        if cfg.use_pretrained:
            raise NotImplementedError(
                "no pretrained weights ship with this package; set use_pretrained=False"
            )
        self.cfg = cfg
        base, c4, c8, c16, c32 = cfg.channels()
        self.stem = nn.Sequential(conv_bn_relu(3, base, stride=2), ResidualBlock(base))
        self.stage4 = nn.Sequential(conv_bn_relu(base, c4, stride=2), ResidualBlock(c4))
        self.stage8 = nn.Sequential(conv_bn_relu(c4, c8, stride=2), ResidualBlock(c8))
        self.stage16 = nn.Sequential(conv_bn_relu(c8, c16, stride=2), ResidualBlock(c16))
        self.stage32 = nn.Sequential(conv_bn_relu(c16, c32, stride=2), ResidualBlock(c32))
        self.up16 = UpMerge(c32, c16, c16)
        self.up8 = UpMerge(c16, c8, c8)
        self.up4 = UpMerge(c8, c4, c4)

    def forward(self, image: torch.Tensor) -> FeaturePyramid:
        check_input_size(image)
        x2 = self.stem(image)
        x4 = self.stage4(x2)
        x8 = self.stage8(x4)
        x16 = self.stage16(x8)
        x32 = self.stage32(x16)
        f16 = self.up16(x32, x16)
        f8 = self.up8(f16, x8)
        f4 = self.up4(f8, x4)
        return FeaturePyramid(level_4=f4, level_8=f8, level_16=f16)


def check_input_size(image: torch.Tensor) -> None:
    if image.ndim != 4 or image.shape[1] != 3:
        raise ValueError(f"expected a B x 3 x H x W image tensor, got shape {tuple(image.shape)}")
    h, w = image.shape[-2:]
    if h % STRIDE != 0 or w % STRIDE != 0:
        raise ValueError(
            f"input {h}x{w} not divisible by the backbone stride {STRIDE}; crop or pad first"
        )


def extract_features(
    extractor: FeatureExtractor, left: torch.Tensor, right: torch.Tensor
) -> tuple[FeaturePyramid, FeaturePyramid]:
    """Run the shared extractor on both views."""
    return extractor(left), extractor(right)
