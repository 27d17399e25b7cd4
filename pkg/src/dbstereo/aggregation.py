"""Cost volume aggregation: decoupled 2D paradigm and a coupled 3D baseline.

The decoupled block alternates two cheap 2D primitives on the fused
(G*D)-channel volume:

* spatial aggregation — a 3x3 convolution grouped by disparity level,
  so matching scores are smoothed within a disparity plane and never
  leak across planes;
* disparity aggregation — a dense 1x1 convolution that mixes every
  disparity level at one pixel, giving each pixel a global disparity
  receptive field in a single layer.

Inside the aggregator channels are laid out level-major: disparity
level k owns the contiguous bundle [k*C/D, (k+1)*C/D).  The coupled
baseline is a conventional 3x3x3 hourglass over (D, H, W) whose width
can be searched to match a decoupled variant's parameter count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .features import FeaturePyramid


class SpatialAggregation(nn.Module):
    """3x3 spatial smoothing within each disparity level.

    Grouped convolution with one group per disparity level enforces the
    isolation structurally; normalization is per-channel (BatchNorm), so
    no statistic crosses a disparity bundle.  ``dense=True`` switches to
    an ungrouped 3x3 conv for ablation.
    """

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        disparity_levels: int,
        stride: int = 1,
        norm: bool = True,
        activation: bool = True,
        dense: bool = False,
    ):
        super().__init__()
        if not dense:
            if in_channels % disparity_levels or out_channels % disparity_levels:
                raise ValueError(
                    f"channels ({in_channels} -> {out_channels}) must be divisible by "
                    f"the disparity level count {disparity_levels}"
                )
        self.disparity_levels = disparity_levels
        groups = 1 if dense else disparity_levels
        self.conv = nn.Conv2d(
            in_channels, out_channels, 3, stride=stride, padding=1, groups=groups, bias=not norm
        )
        self.norm = nn.BatchNorm2d(out_channels) if norm else None
        self.act = nn.LeakyReLU(0.1) if activation else None

    def forward(self, x):
        x = self.conv(x)
        if self.norm is not None:
            x = self.norm(x)
        if self.act is not None:
            x = self.act(x)
        return x


class DisparityAggregation(nn.Module):
    """Dense 1x1 mixing of all disparity levels and groups at one pixel.

    Output at (y, x) depends only on the input column at (y, x): there is
    no spatial mixing and no spatial statistic.
    """

    def __init__(self, in_channels: int, out_channels: int, activation: bool = True):
        super().__init__()
        self.conv = nn.Conv2d(in_channels, out_channels, 1, bias=True)
        self.act = nn.LeakyReLU(0.1) if activation else None

    def forward(self, x):
        x = self.conv(x)
        if self.act is not None:
            x = self.act(x)
        return x


class AggregationPair(nn.Module):
    """One spatial_aggregate -> disparity_aggregate unit at constant width."""

    def __init__(self, channels: int, disparity_levels: int, dense: bool = False):
        super().__init__()
        self.spatial = SpatialAggregation(channels, channels, disparity_levels, dense=dense)
        self.disparity = DisparityAggregation(channels, channels)

    def forward(self, x):
        return self.disparity(self.spatial(x))


class SpatialAttentionGate(nn.Module):
    """Single-channel sigmoid gate from the fused feature pyramid.

    The gate is purely spatial: one weight per pixel multiplies every
    channel of the volume.
    """

    def __init__(self, c4: int, c8: int, c16: int, hidden: int = 32):
        super().__init__()
        self.fuse = nn.Sequential(
            nn.Conv2d(c4 + c8 + c16, hidden, 1, bias=True),
            nn.LeakyReLU(0.1),
            nn.Conv2d(hidden, 1, 1, bias=True),
        )

    def forward(self, pyramid: FeaturePyramid, size: tuple[int, int]) -> torch.Tensor:
        parts = [
            F.interpolate(level, size=size, mode="bilinear", align_corners=False)
            if level.shape[-2:] != size
            else level
            for level in (pyramid.level_4, pyramid.level_8, pyramid.level_16)
        ]
        return torch.sigmoid(self.fuse(torch.cat(parts, dim=1)))


def apply_spatial_attention(volume: torch.Tensor, gate: torch.Tensor) -> torch.Tensor:
    """Multiply every channel of ``volume`` by the (B, 1, H, W) gate map."""
    if gate.shape[-2:] != volume.shape[-2:]:
        raise ValueError(
            f"gate spatial size {tuple(gate.shape[-2:])} does not match volume "
            f"{tuple(volume.shape[-2:])}"
        )
    return volume * gate


@dataclass(frozen=True)
class BGAConfig:
    """Layout of the decoupled encoder-decoder aggregator.

    The entry 1x1 projection keeps the width at groups * disparity_levels;
    deeper stages widen by ``channel_growth`` per scale (rounded to whole
    channels per level).
    """

    groups: int = 8
    disparity_levels: int = 8
    num_stages: int = 2
    blocks_per_stage: int = 1
    channel_growth: float = 1.5
    use_attention: bool = False
    spatial_dense: bool = False

    def bundle_sizes(self) -> list[int]:
        return [
            max(1, math.ceil(self.groups * self.channel_growth**k))
            for k in range(self.num_stages + 1)
        ]

    def widths(self) -> list[int]:
        return [b * self.disparity_levels for b in self.bundle_sizes()]

    def validate(self) -> None:
        if self.groups < 1 or self.disparity_levels < 1:
            raise ValueError("groups and disparity_levels must be positive")
        if self.num_stages < 0:
            raise ValueError("num_stages must be >= 0")
        if self.blocks_per_stage < 1:
            raise ValueError("blocks_per_stage must be >= 1")
        if self.channel_growth < 1.0:
            raise ValueError("channel_growth must be >= 1")


class BGAAggregator(nn.Module):
    """Bidirectional geometry aggregation over the fused 3D cost volume.

    forward: (B, G*D, H4, W4) -> (scores, init_scores), both (B, D, H4, W4).
    The init head taps the deepest encoder state so the interpolated
    disparity head can be supervised separately.
    """

    def __init__(self, cfg: BGAConfig, attention_channels: tuple[int, int, int] | None = None):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        d = cfg.disparity_levels
        widths = cfg.widths()
        in_channels = cfg.groups * d

        self.entry = DisparityAggregation(in_channels, widths[0])
        if cfg.use_attention:
            if attention_channels is None:
                raise ValueError("use_attention requires the guidance pyramid channel counts")
            self.attention = SpatialAttentionGate(*attention_channels)
        else:
            self.attention = None

        def pairs(width):
            return nn.Sequential(
                *[AggregationPair(width, d, dense=cfg.spatial_dense) for _ in range(cfg.blocks_per_stage)]
            )

        self.entry_blocks = pairs(widths[0])
        self.down = nn.ModuleList(
            SpatialAggregation(widths[k], widths[k + 1], d, stride=2, dense=cfg.spatial_dense)
            for k in range(cfg.num_stages)
        )
        self.enc_blocks = nn.ModuleList(pairs(widths[k + 1]) for k in range(cfg.num_stages))
        self.lateral = nn.ModuleList(
            DisparityAggregation(widths[k + 1], widths[k], activation=False)
            for k in reversed(range(cfg.num_stages))
        )
        self.dec_blocks = nn.ModuleList(pairs(widths[k]) for k in reversed(range(cfg.num_stages)))
        self.init_head = nn.Conv2d(widths[-1], d, 1, bias=True)
        self.exit = nn.Conv2d(widths[0], d, 1, bias=True)

    def forward(
        self, volume: torch.Tensor, guidance: FeaturePyramid | None = None
    ) -> tuple[torch.Tensor, torch.Tensor]:
        expected = self.cfg.groups * self.cfg.disparity_levels
        if volume.ndim != 4 or volume.shape[1] != expected:
            raise ValueError(
                f"expected a (B, {expected}, H, W) fused volume, got shape {tuple(volume.shape)}"
            )
        out_size = volume.shape[-2:]
        x = self.entry(volume)
        if self.attention is not None:
            if guidance is None:
                raise ValueError("attention gate enabled but no guidance pyramid given")
            x = apply_spatial_attention(x, self.attention(guidance, out_size))

        skips = [x]
        for down, blocks in zip(self.down, self.enc_blocks):
            x = blocks(down(x))
            skips.append(x)

        init_scores = self.init_head(x)
        if init_scores.shape[-2:] != out_size:
            init_scores = F.interpolate(
                init_scores, size=out_size, mode="bilinear", align_corners=False
            )

        for lateral, blocks, skip in zip(self.lateral, self.dec_blocks, reversed(skips[:-1])):
            x = F.interpolate(x, size=skip.shape[-2:], mode="nearest")
            x = blocks(lateral(x) + skip)

        return self.exit(x), init_scores


class Conv3dUnit(nn.Module):
    """One 3x3x3 convolution (+BN +LeakyReLU) over (D, H, W)."""

    def __init__(self, in_channels, out_channels, stride=1, norm=True, activation=True):
        super().__init__()
        self.conv = nn.Conv3d(in_channels, out_channels, 3, stride=stride, padding=1, bias=not norm)
        self.norm = nn.BatchNorm3d(out_channels) if norm else None
        self.act = nn.LeakyReLU(0.1) if activation else None

    def forward(self, x):
        x = self.conv(x)
        if self.norm is not None:
            x = self.norm(x)
        if self.act is not None:
            x = self.act(x)
        return x


@dataclass(frozen=True)
class Conv3DConfig:
    groups: int = 8
    base_channels: int = 16
    num_stages: int = 2

    def validate(self) -> None:
        if self.groups < 1 or self.base_channels < 1:
            raise ValueError("groups and base_channels must be positive")
        if self.num_stages < 0:
            raise ValueError("num_stages must be >= 0")


class Conv3DAggregator(nn.Module):
    """Coupled 3x3x3 hourglass baseline over the raw 4D volume.

    forward: (B, G, D, H4, W4) -> (scores, init_scores), both (B, D, H4, W4).
    Every layer grows the disparity receptive field by at most +-1, which
    is exactly the coupling the decoupled block avoids.
    """

    def __init__(self, cfg: Conv3DConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        w = cfg.base_channels
        widths = [w] + [2 * w] * cfg.num_stages
        self.entry = nn.Sequential(Conv3dUnit(cfg.groups, w), Conv3dUnit(w, w))
        self.down = nn.ModuleList(
            Conv3dUnit(widths[k], widths[k + 1], stride=2) for k in range(cfg.num_stages)
        )
        self.enc_blocks = nn.ModuleList(
            Conv3dUnit(widths[k + 1], widths[k + 1]) for k in range(cfg.num_stages)
        )
        self.lateral = nn.ModuleList(
            nn.Conv3d(widths[k + 1], widths[k], 1, bias=False)
            for k in reversed(range(cfg.num_stages))
        )
        self.dec_blocks = nn.ModuleList(
            Conv3dUnit(widths[k], widths[k]) for k in reversed(range(cfg.num_stages))
        )
        self.init_head = nn.Conv3d(widths[-1], 1, 3, padding=1, bias=True)
        self.exit = nn.Conv3d(widths[0], 1, 3, padding=1, bias=True)

    def forward(
        self, volume: torch.Tensor, guidance: FeaturePyramid | None = None
    ) -> tuple[torch.Tensor, torch.Tensor]:
        if volume.ndim != 5 or volume.shape[1] != self.cfg.groups:
            raise ValueError(
                f"expected a (B, {self.cfg.groups}, D, H, W) volume, got shape {tuple(volume.shape)}"
            )
        out_size = volume.shape[-3:]
        x = self.entry(volume)
        skips = [x]
        for down, block in zip(self.down, self.enc_blocks):
            x = block(down(x))
            skips.append(x)

        init_scores = self.init_head(x)
        if init_scores.shape[-3:] != out_size:
            init_scores = F.interpolate(
                init_scores, size=out_size, mode="trilinear", align_corners=False
            )
        init_scores = init_scores.squeeze(1)

        for lateral, block, skip in zip(self.lateral, self.dec_blocks, reversed(skips[:-1])):
            x = F.interpolate(x, size=skip.shape[-3:], mode="nearest")
            x = block(lateral(x) + skip)

        return self.exit(x).squeeze(1), init_scores


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def match_conv3d_channels(
    target_params: int,
    groups: int,
    num_stages: int = 2,
    tolerance: float = 0.10,
    max_channels: int = 256,
) -> Conv3DConfig:
    """Find the baseline width whose parameter count best matches a target.

    Raises if no width lands within ``tolerance`` of the target.
    """
    best_cfg, best_err = None, float("inf")
    for w in range(1, max_channels + 1):
        cfg = Conv3DConfig(groups=groups, base_channels=w, num_stages=num_stages)
        with torch.device("meta"):
            params = count_parameters(Conv3DAggregator(cfg))
        err = abs(params - target_params) / target_params
        if err < best_err:
            best_cfg, best_err = cfg, err
        if params > target_params * (1 + tolerance) and err > best_err:
            break
    if best_cfg is None or best_err > tolerance:
        raise ValueError(
            f"no conv3d width within {tolerance:.0%} of {target_params} parameters "
            f"(best miss {best_err:.1%})"
        )
    return best_cfg
