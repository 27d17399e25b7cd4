"""Built-in invariant suite for `dbstereo selftest`.

Each check is small and self-contained; one PASS/FAIL line per check.
"""

from __future__ import annotations

import math
import tempfile
from pathlib import Path

import numpy as np
import torch

from .aggregation import BGAConfig, BGAAggregator, DisparityAggregation, SpatialAggregation
from .bench import count_flops
from .costvolume import build_gwc_volume, channel2disp, disp2channel
from .data.formats import load_pfm, write_pfm
from .data.synthetic import SyntheticConfig, generate_random_dot_pair, photo_consistency_fraction
from .regression import convex_upsample, soft_argmin
from .training import total_loss


def check_photo_consistency():
    sample = generate_random_dot_pair(SyntheticConfig(height=64, width=96, d_max=16, seed=3))
    return photo_consistency_fraction(sample) == 1.0


def check_generation_determinism():
    cfg = SyntheticConfig(height=64, width=96, d_max=16, seed=11)
    a, b = generate_random_dot_pair(cfg), generate_random_dot_pair(cfg)
    return (
        np.array_equal(a.left, b.left)
        and np.array_equal(a.right, b.right)
        and np.array_equal(a.disparity_gt, b.disparity_gt)
        and np.array_equal(a.valid_mask, b.valid_mask)
    )


def check_pfm_roundtrip():
    data = np.random.default_rng(0).normal(size=(8, 8)).astype(np.float32)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "t.pfm"
        write_pfm(path, data)
        back, _ = load_pfm(path)
    return np.array_equal(back, data)


def check_correlation_oracle():
    gen = torch.Generator().manual_seed(0)
    f_l = torch.randn((1, 4, 3, 5), generator=gen, dtype=torch.float64)
    f_r = torch.randn((1, 4, 3, 5), generator=gen, dtype=torch.float64)
    vol = build_gwc_volume(f_l, f_r, d_max=8, num_groups=2)
    ref = torch.zeros_like(vol)
    for g in range(2):
        for d in range(2):
            for y in range(3):
                for x in range(5):
                    if x - d < 0:
                        continue
                    ref[0, g, d, y, x] = (
                        f_l[0, 2 * g : 2 * g + 2, y, x] * f_r[0, 2 * g : 2 * g + 2, y, x - d]
                    ).mean()
    return torch.allclose(vol, ref, atol=1e-6)


def check_channel2disp_bijection():
    gen = torch.Generator().manual_seed(1)
    vol = torch.randn((2, 3, 4, 5, 6), generator=gen)
    fused = channel2disp(vol)
    return torch.equal(disp2channel(fused, 3), vol) and torch.isclose(fused.sum(), vol.sum())


def check_spatial_isolation():
    torch.manual_seed(0)
    layer = SpatialAggregation(24, 24, disparity_levels=4).eval()
    x = torch.randn((1, 24, 6, 8))
    with torch.no_grad():
        base = layer(x)
        for level in range(4):
            z = x.clone()
            keep = slice(level * 6, (level + 1) * 6)
            mask = torch.ones(24, dtype=torch.bool)
            mask[keep] = False
            z[:, mask] = 0.0
            if not torch.equal(layer(z)[:, keep], base[:, keep]):
                return False
    return True


def check_disparity_isolation():
    torch.manual_seed(0)
    layer = DisparityAggregation(16, 16).eval()
    x = torch.randn((1, 16, 6, 8))
    z = x.clone()
    z[:, :, 2, 3] += 1.0
    with torch.no_grad():
        a, b = layer(x), layer(z)
    diff = (a != b).any(dim=1)[0]
    return bool(diff[2, 3]) and diff.sum().item() == 1


def check_soft_argmin():
    uniform = torch.zeros((1, 16, 2, 2))
    d, prob = soft_argmin(uniform)
    ok = torch.allclose(d, torch.full((1, 2, 2), 7.5))
    ok &= torch.allclose(prob.sum(dim=1), torch.ones((1, 2, 2)))
    scores = torch.randn((1, 8, 3, 3))
    d2, _ = soft_argmin(scores)
    return bool(ok and (d2 >= 0).all() and (d2 <= 7).all())


def check_loss_arithmetic():
    gt = torch.zeros((1, 4, 4))
    mask = torch.ones((1, 4, 4), dtype=torch.bool)
    perfect = total_loss(gt, gt, gt, mask).item()
    init_only = total_loss(gt + 1.5, gt, gt, mask).item()
    final_only = total_loss(gt, gt + 1.5, gt, mask).item()
    return (
        perfect == 0.0
        and math.isclose(init_only, 0.3, rel_tol=1e-6)
        and math.isclose(final_only, 1.0, rel_tol=1e-6)
    )


def check_convex_upsample():
    gen = torch.Generator().manual_seed(2)
    d = torch.rand((1, 3, 4), generator=gen) * 7
    logits = torch.randn((1, 9, 4, 4, 3, 4), generator=gen)
    weights = torch.softmax(logits, dim=1)
    up = convex_upsample(d, weights)
    lo, hi = 4 * d.min().item(), 4 * d.max().item()
    return bool((up >= lo - 1e-5).all() and (up <= hi + 1e-5).all())


def check_bga_shapes():
    torch.manual_seed(0)
    agg = BGAAggregator(BGAConfig(groups=4, disparity_levels=4, num_stages=2)).eval()
    vol = torch.randn((1, 16, 8, 8))
    with torch.no_grad():
        scores, init_scores = agg(vol)
    return scores.shape == (1, 4, 8, 8) and init_scores.shape == (1, 4, 8, 8)


def check_flop_formula():
    conv = torch.nn.Conv2d(4, 4, 1, bias=False)
    count = count_flops(conv, (4, 2, 2))
    return count.total == 128


CHECKS = [
    ("photo-consistency", check_photo_consistency),
    ("generation-determinism", check_generation_determinism),
    ("pfm-roundtrip", check_pfm_roundtrip),
    ("correlation-oracle", check_correlation_oracle),
    ("channel2disp-bijection", check_channel2disp_bijection),
    ("spatial-isolation", check_spatial_isolation),
    ("disparity-isolation", check_disparity_isolation),
    ("soft-argmin-contracts", check_soft_argmin),
    ("loss-arithmetic", check_loss_arithmetic),
    ("convex-upsample-bound", check_convex_upsample),
    ("bga-shape-contract", check_bga_shapes),
    ("flop-formula", check_flop_formula),
]


def run_selftest() -> bool:
    all_ok = True
    for name, check in CHECKS:
        try:
            ok = bool(check())
        except Exception as exc:  # noqa: BLE001 - report, don't crash the suite
            ok = False
            print(f"FAIL {name} (raised {type(exc).__name__}: {exc})")
            all_ok = False
            continue
        print(f"{'PASS' if ok else 'FAIL'} {name}")
        all_ok &= ok
    return all_ok
