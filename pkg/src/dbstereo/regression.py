"""Disparity regression: softmax expectation plus two upsampling heads.

Aggregated scores are treated as similarities (the correlation seed is
higher-is-better), so the softmax is applied directly without negation.
``upsample_interp`` is fixed corner-aligned bilinear; ``upsample_learned``
predicts per-pixel convex combinations of a 3x3 quarter-resolution
neighborhood, so outputs are bounded by the neighborhood extremes.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class DisparityPrediction:
    """Model output bundle.

    d_quarter is in quarter-resolution pixel units, d_init/d_final in
    full-resolution pixels; prob_volume columns sum to one.
    """

    d_quarter: torch.Tensor
    d_init: torch.Tensor
    d_final: torch.Tensor
    prob_volume: torch.Tensor


def soft_argmin(scores: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Disparity expectation under a softmax over the disparity axis.

    Args:
        scores: (B, D, H, W) or (D, H, W) matching scores, higher = better.

    Returns:
        (d_quarter, prob_volume) with d_quarter in [0, D-1].
    """
    if not torch.isfinite(scores).all():
        raise ValueError("scores must be finite")
    squeeze = scores.ndim == 3
    if squeeze:
        scores = scores.unsqueeze(0)
    prob = F.softmax(scores, dim=1)
    levels = torch.arange(scores.shape[1], dtype=scores.dtype, device=scores.device)
    d = (prob * levels.view(1, -1, 1, 1)).sum(dim=1)
    if squeeze:
        return d.squeeze(0), prob.squeeze(0)
    return d, prob


def upsample_interp(d_quarter: torch.Tensor, factor: int = 4) -> torch.Tensor:
    """Corner-aligned bilinear x4 upsampling with the unit change from
    quarter-resolution to full-resolution pixels (values scale by 4)."""
    squeeze = d_quarter.ndim == 2
    if squeeze:
        d_quarter = d_quarter.unsqueeze(0)
    out = F.interpolate(
        d_quarter.unsqueeze(1), scale_factor=factor, mode="bilinear", align_corners=True
    ).squeeze(1) * float(factor)
    return out.squeeze(0) if squeeze else out


def convex_upsample(d_quarter: torch.Tensor, weights: torch.Tensor, factor: int = 4) -> torch.Tensor:
    """Upsample by convex combination of each output pixel's 3x3 source neighborhood.

    Args:
        d_quarter: (B, H, W) quarter-resolution disparities.
        weights: (B, 9, factor, factor, H, W), already normalized so the
            9 neighbor weights at each output position sum to one.

    Returns:
        (B, H*factor, W*factor) full-resolution disparities, scaled by
        ``factor`` for the resolution unit change.
    """
    b, h, w = d_quarter.shape
    if weights.shape != (b, 9, factor, factor, h, w):
        raise ValueError(
            f"expected weights of shape {(b, 9, factor, factor, h, w)}, got {tuple(weights.shape)}"
        )
    # replicate padding keeps border outputs convex in real neighbors
    padded = F.pad(d_quarter.unsqueeze(1), (1, 1, 1, 1), mode="replicate")
    neighbors = F.unfold(padded, kernel_size=3).view(b, 9, h, w)
    up = torch.einsum("bkijhw,bkhw->bijhw", weights, neighbors)
    up = up.permute(0, 3, 1, 4, 2).reshape(b, h * factor, w * factor)
    return up * float(factor)


class LearnedUpsampler(nn.Module):
    """Predicts the convex-combination masks from guidance features.

    Guidance is the left image's quarter-resolution feature map; masks
    are softmax-normalized over the 9 neighbors.
    """

    def __init__(self, guidance_channels: int, hidden: int = 64, factor: int = 4):
        super().__init__()
        self.factor = factor
        self.head = nn.Sequential(
            nn.Conv2d(guidance_channels, hidden, 3, padding=1, bias=True),
            nn.LeakyReLU(0.1),
            nn.Conv2d(hidden, 9 * factor * factor, 1, bias=True),
        )

    def forward(self, d_quarter: torch.Tensor, guidance: torch.Tensor) -> torch.Tensor:
        if guidance.shape[-2:] != d_quarter.shape[-2:]:
            raise ValueError(
                f"guidance spatial size {tuple(guidance.shape[-2:])} does not match "
                f"d_quarter {tuple(d_quarter.shape[-2:])}"
            )
        b, h, w = d_quarter.shape
        logits = self.head(guidance).view(b, 9, self.factor, self.factor, h, w)
        weights = torch.softmax(logits, dim=1)
        return convex_upsample(d_quarter, weights, self.factor)


def upsample_learned(
    d_quarter: torch.Tensor, guidance: torch.Tensor, upsampler: LearnedUpsampler
) -> torch.Tensor:
    """Functional wrapper around :class:`LearnedUpsampler`."""
    return upsampler(d_quarter, guidance)
