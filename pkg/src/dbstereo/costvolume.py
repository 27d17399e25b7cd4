"""Group-wise correlation volume and its lossless channel fusion.

The 4D volume holds one correlation map per (group, disparity) pair at
quarter resolution; ``channel2disp`` reshapes it to a 3D tensor whose
channel axis interleaves groups and disparities as c = g * D + d, ready
for 2D aggregation.
"""

from __future__ import annotations

from pathlib import Path

import torch

from .data.formats import write_pfm


def groupwise_correlation(f_a: torch.Tensor, f_b: torch.Tensor, num_groups: int) -> torch.Tensor:
    """Per-group mean of elementwise products: (B, C, H, W) -> (B, G, H, W)."""
    b, c, h, w = f_a.shape
    if c % num_groups != 0:
        raise ValueError(f"channel count {c} not divisible by num_groups {num_groups}")
    prod = (f_a * f_b).view(b, num_groups, c // num_groups, h, w)
    return prod.mean(dim=2)


def build_gwc_volume(
    f_l: torch.Tensor, f_r: torch.Tensor, d_max: int, num_groups: int
) -> torch.Tensor:
    """Build the group-wise correlation volume from quarter-resolution features.

    Args:
        f_l, f_r: (B, C, H4, W4) feature maps from the shared extractor.
        d_max: full-resolution disparity range; candidates are d_max / 4.
        num_groups: correlation group count; C must be divisible by it.

    Returns:
        (B, G, D, H4, W4) volume; entries whose source column x - d falls
        outside the right image are exactly zero.
    """
    if f_l.shape != f_r.shape:
        raise ValueError(f"feature shapes disagree: {tuple(f_l.shape)} vs {tuple(f_r.shape)}")
    b, c, h, w = f_l.shape
    if c % num_groups != 0:
        raise ValueError(f"channel count {c} not divisible by num_groups {num_groups}")
    if d_max % 4 != 0:
        raise ValueError(f"d_max={d_max} must be divisible by 4")
    num_disp = d_max // 4
    if num_disp > w:
        raise ValueError(
            f"d_max/4={num_disp} exceeds the feature width {w}; no candidate can match"
        )
    volume = f_l.new_zeros((b, num_groups, num_disp, h, w))
    for d in range(num_disp):
        if d == 0:
            volume[:, :, d] = groupwise_correlation(f_l, f_r, num_groups)
        else:
            volume[:, :, d, :, d:] = groupwise_correlation(
                f_l[:, :, :, d:], f_r[:, :, :, :-d], num_groups
            )
    return volume


def channel2disp(volume: torch.Tensor) -> torch.Tensor:
    """Fuse group and disparity axes: (B, G, D, H, W) -> (B, G*D, H, W).

    Pure re-indexing with channel c = g * D + d; invertible via
    :func:`disp2channel`.
    """
    if volume.ndim != 5:
        raise ValueError(f"expected a (B, G, D, H, W) volume, got shape {tuple(volume.shape)}")
    b, g, d, h, w = volume.shape
    return volume.reshape(b, g * d, h, w)


def disp2channel(volume: torch.Tensor, num_groups: int) -> torch.Tensor:
    """Inverse of :func:`channel2disp`."""
    if volume.ndim != 4:
        raise ValueError(f"expected a (B, C, H, W) volume, got shape {tuple(volume.shape)}")
    b, c, h, w = volume.shape
    if c % num_groups != 0:
        raise ValueError(f"channel count {c} not divisible by num_groups {num_groups}")
    return volume.reshape(b, num_groups, c // num_groups, h, w)


def dump_volume_pfm(volume: torch.Tensor, out_dir: str | Path) -> list[Path]:
    """Debug dump: write each (group, disparity) slice of a 4D volume as PFM."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vol = volume.detach().cpu()
    if vol.ndim == 5:
        vol = vol[0]
    if vol.ndim != 4:
        raise ValueError("expected a (G, D, H, W) or (B, G, D, H, W) volume")
    paths = []
    for g in range(vol.shape[0]):
        for d in range(vol.shape[1]):
            path = out_dir / f"slice_g{g:02d}_d{d:03d}.pfm"
            write_pfm(path, vol[g, d].numpy())
            paths.append(path)
    return paths
