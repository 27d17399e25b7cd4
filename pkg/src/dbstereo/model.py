"""End-to-end stereo model: features -> cost volume -> aggregation -> regression."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .aggregation import (
    BGAAggregator,
    BGAConfig,
    Conv3DAggregator,
    Conv3DConfig,
    count_parameters,
    match_conv3d_channels,
)
from .costvolume import build_gwc_volume, channel2disp
from .data.synthetic import StereoSample
from .features import BackboneConfig, FeatureExtractor
from .regression import DisparityPrediction, LearnedUpsampler, soft_argmin, upsample_interp

PARADIGMS = ("bga", "conv3d")

# correlation group defaults per variant
_VARIANT_GROUPS = {"tiny": 8, "S": 8, "M": 16, "L": 16}
_VARIANT_BLOCKS = {"tiny": 1, "S": 1, "M": 2, "L": 3}


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "tiny"
    max_disparity: int = 32
    paradigm: str = "bga"
    num_groups: int = 0          # 0 = variant default
    num_stages: int = 2
    blocks_per_stage: int = 0    # 0 = variant default
    use_attention: bool = False
    spatial_dense: bool = False
    conv3d_channels: int = 0     # 0 = parameter-match against the bga variant
    backbone: BackboneConfig = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.backbone is None:
            object.__setattr__(self, "backbone", BackboneConfig(variant=self.variant))
        if self.paradigm not in PARADIGMS:
            raise ValueError(f"paradigm must be one of {PARADIGMS}, got {self.paradigm!r}")
        if self.max_disparity % 4 != 0 or self.max_disparity < 4:
            raise ValueError("max_disparity must be a positive multiple of 4")
        if self.variant not in _VARIANT_GROUPS:
            raise ValueError(f"unknown variant {self.variant!r}")

    @property
    def groups(self) -> int:
        return self.num_groups or _VARIANT_GROUPS[self.variant]

    @property
    def blocks(self) -> int:
        return self.blocks_per_stage or _VARIANT_BLOCKS[self.variant]

    @property
    def disparity_levels(self) -> int:
        return self.max_disparity // 4

    def bga_config(self) -> BGAConfig:
        return BGAConfig(
            groups=self.groups,
            disparity_levels=self.disparity_levels,
            num_stages=self.num_stages,
            blocks_per_stage=self.blocks,
            use_attention=self.use_attention,
            spatial_dense=self.spatial_dense,
        )

    def fingerprint(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def build_aggregator(cfg: ModelConfig, attention_channels=None) -> nn.Module:
    """Build the configured aggregator; conv3d widths default to a
    parameter match against the same-variant decoupled aggregator."""
    if cfg.paradigm == "bga":
        return BGAAggregator(cfg.bga_config(), attention_channels=attention_channels)
    if cfg.conv3d_channels > 0:
        c3d = Conv3DConfig(
            groups=cfg.groups, base_channels=cfg.conv3d_channels, num_stages=cfg.num_stages
        )
    else:
        with torch.device("meta"):
            target = count_parameters(BGAAggregator(cfg.bga_config()))
        c3d = match_conv3d_channels(target, cfg.groups, num_stages=cfg.num_stages)
    return Conv3DAggregator(c3d)


class StereoModel(nn.Module):
    """Full disparity network, switchable between aggregation paradigms."""

    def __init__(self, cfg: ModelConfig = ModelConfig()):
        super().__init__()
        self.cfg = cfg
        self.extractor = FeatureExtractor(cfg.backbone)
        c4, c8, c16 = (
            self.extractor.cfg.channels()[1],
            self.extractor.cfg.channels()[2],
            self.extractor.cfg.channels()[3],
        )
        if c4 % cfg.groups != 0:
            raise ValueError(
                f"level-4 channel count {c4} not divisible by correlation groups {cfg.groups}"
            )
        self.aggregator = build_aggregator(cfg, attention_channels=(c4, c8, c16))
        self.upsampler = LearnedUpsampler(guidance_channels=c4)

    def forward(self, left: torch.Tensor, right: torch.Tensor) -> DisparityPrediction:
        pyr_l = self.extractor(left)
        pyr_r = self.extractor(right)
        volume4d = build_gwc_volume(
            pyr_l.level_4, pyr_r.level_4, self.cfg.max_disparity, self.cfg.groups
        )
        if self.cfg.paradigm == "bga":
            scores, init_scores = self.aggregator(channel2disp(volume4d), pyr_l)
        else:
            scores, init_scores = self.aggregator(volume4d, pyr_l)

        d_quarter_init, _ = soft_argmin(init_scores)
        d_init = upsample_interp(d_quarter_init)
        d_quarter, prob = soft_argmin(scores)
        d_final = self.upsampler(d_quarter, pyr_l.level_4)
        return DisparityPrediction(
            d_quarter=d_quarter, d_init=d_init, d_final=d_final, prob_volume=prob
        )


def sample_to_tensors(
    sample: StereoSample, device=None
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """StereoSample -> batched (left, right, disparity, mask) tensors."""
    to = lambda img: torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1)))[None].to(
        device or "cpu"
    )
    left = to(sample.left.astype(np.float32))
    right = to(sample.right.astype(np.float32))
    disp = torch.from_numpy(sample.disparity_gt.astype(np.float32))[None].to(device or "cpu")
    mask = torch.from_numpy(sample.valid_mask)[None].to(device or "cpu")
    return left, right, disp, mask
