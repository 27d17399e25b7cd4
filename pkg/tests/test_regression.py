"""Soft-argmin regression and the two upsampling heads."""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from dbstereo.regression import (
    LearnedUpsampler,
    convex_upsample,
    soft_argmin,
    upsample_interp,
)
from helpers import gradient_check


def numpy_bilinear_corner_aligned(src: np.ndarray, factor: int) -> np.ndarray:
    """Direct corner-aligned bilinear formula, independent of torch."""
    h, w = src.shape
    out_h, out_w = h * factor, w * factor
    out = np.zeros((out_h, out_w))
    for i in range(out_h):
        for j in range(out_w):
            y = i * (h - 1) / (out_h - 1) if out_h > 1 else 0.0
            x = j * (w - 1) / (out_w - 1) if out_w > 1 else 0.0
            y0, x0 = int(math.floor(y)), int(math.floor(x))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = y - y0, x - x0
            out[i, j] = (
                src[y0, x0] * (1 - fy) * (1 - fx)
                + src[y0, x1] * (1 - fy) * fx
                + src[y1, x0] * fy * (1 - fx)
                + src[y1, x1] * fy * fx
            )
    return out


class TestSoftArgmin:
    def test_dominant_level_wins(self):
        scores = torch.zeros((1, 8, 2, 2))
        scores[:, 5] = 50.0
        d, _ = soft_argmin(scores)
        assert torch.allclose(d, torch.full((1, 2, 2), 5.0), atol=1e-3)

    def test_uniform_scores_give_exact_midpoint(self):
        d, prob = soft_argmin(torch.zeros((1, 16, 3, 4)))
        assert torch.equal(d, torch.full((1, 3, 4), 7.5))
        assert torch.allclose(prob, torch.full((1, 16, 3, 4), 1 / 16))

    def test_hand_softmax_arithmetic(self):
        scores = torch.tensor([0.0, math.log(2.0), 0.0]).view(1, 3, 1, 1)
        d, prob = soft_argmin(scores)
        assert torch.allclose(prob.flatten(), torch.tensor([0.25, 0.5, 0.25]), atol=1e-7)
        assert d.item() == pytest.approx(1.0, abs=1e-7)

    def test_unbatched_input_supported(self):
        d, prob = soft_argmin(torch.zeros((4, 2, 2)))
        assert d.shape == (2, 2)
        assert prob.shape == (4, 2, 2)

    def test_rejects_non_finite_scores(self):
        scores = torch.zeros((1, 4, 1, 1))
        scores[0, 0, 0, 0] = float("inf")
        with pytest.raises(ValueError, match="finite"):
            soft_argmin(scores)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), d=st.integers(2, 32))
    def test_output_in_range_property(self, seed, d):
        gen = torch.Generator().manual_seed(seed)
        scores = torch.randn((1, d, 3, 3), generator=gen) * 10
        out, prob = soft_argmin(scores)
        assert (out >= 0).all() and (out <= d - 1).all()
        assert torch.allclose(prob.sum(dim=1), torch.ones((1, 3, 3)), atol=1e-5)

    def test_per_pixel_shift_invariance(self):
        gen = torch.Generator().manual_seed(0)
        scores = torch.randn((1, 12, 4, 5), generator=gen)
        shift = torch.randn((1, 1, 4, 5), generator=gen) * 100
        a, _ = soft_argmin(scores)
        b, _ = soft_argmin(scores + shift)
        assert torch.allclose(a, b, atol=1e-6)

    def test_gradient_matches_finite_differences(self):
        gen = torch.Generator().manual_seed(1)
        scores = torch.randn((1, 5, 1, 1), generator=gen, dtype=torch.float64)
        err = gradient_check(lambda s: soft_argmin(s)[0].sum(), scores)
        assert err <= 1e-4


class TestUpsampleInterp:
    def test_constant_map_scales_by_four(self):
        out = upsample_interp(torch.full((1, 6, 8), 2.5))
        assert out.shape == (1, 24, 32)
        assert torch.allclose(out, torch.full((1, 24, 32), 10.0))

    def test_single_sample_broadcast(self):
        out = upsample_interp(torch.full((1, 1, 1), 3.0))
        assert out.shape == (1, 4, 4)
        assert torch.allclose(out, torch.full((1, 4, 4), 12.0))

    def test_matches_independent_bilinear_formula(self):
        rng = np.random.default_rng(2)
        src = rng.uniform(0, 7, size=(6, 8))
        expected = 4.0 * numpy_bilinear_corner_aligned(src, 4)
        out = upsample_interp(torch.from_numpy(src)[None].float())
        np.testing.assert_allclose(out[0].numpy(), expected, atol=1e-5)


class TestConvexUpsample:
    @staticmethod
    def uniform_weights(b, h, w):
        return torch.full((b, 9, 4, 4, h, w), 1.0 / 9.0)

    def test_uniform_weights_average_neighborhood(self):
        gen = torch.Generator().manual_seed(3)
        d = torch.rand((1, 5, 6), generator=gen) * 7
        out = convex_upsample(d, self.uniform_weights(1, 5, 6))
        padded = torch.nn.functional.pad(d[None], (1, 1, 1, 1), mode="replicate")[0]
        for y in (0, 2, 4):
            for x in (0, 3, 5):
                mean = padded[0, y : y + 3, x : x + 3].mean()
                block = out[0, 4 * y : 4 * y + 4, 4 * x : 4 * x + 4]
                assert torch.allclose(block, 4.0 * mean.expand(4, 4), atol=1e-5)

    def test_constant_input_any_weights(self):
        gen = torch.Generator().manual_seed(4)
        d = torch.full((1, 4, 4), 3.25)
        weights = torch.softmax(torch.randn((1, 9, 4, 4, 4, 4), generator=gen), dim=1)
        out = convex_upsample(d, weights)
        assert torch.allclose(out, torch.full((1, 16, 16), 13.0), atol=1e-5)

    def test_center_one_hot_is_nearest_neighbor(self):
        gen = torch.Generator().manual_seed(5)
        d = torch.rand((1, 3, 4), generator=gen)
        weights = torch.zeros((1, 9, 4, 4, 3, 4))
        weights[:, 4] = 1.0  # center of the 3x3 window
        out = convex_upsample(d, weights)
        expected = 4.0 * d.repeat_interleave(4, dim=1).repeat_interleave(4, dim=2)
        assert torch.allclose(out, expected, atol=1e-6)

    def test_bad_weight_shape_rejected(self):
        with pytest.raises(ValueError, match="weights"):
            convex_upsample(torch.zeros((1, 2, 2)), torch.zeros((1, 9, 4, 4, 3, 3)))

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_convexity_bound_property(self, seed):
        gen = torch.Generator().manual_seed(seed)
        d = torch.rand((1, 3, 5), generator=gen) * 11
        weights = torch.softmax(torch.randn((1, 9, 4, 4, 3, 5), generator=gen) * 3, dim=1)
        out = convex_upsample(d, weights)
        assert (out >= 4 * d.min() - 1e-4).all()
        assert (out <= 4 * d.max() + 1e-4).all()


class TestLearnedUpsampler:
    def test_module_output_shape_and_bound(self):
        torch.manual_seed(6)
        up = LearnedUpsampler(guidance_channels=8).eval()
        gen = torch.Generator().manual_seed(7)
        d = torch.rand((2, 6, 8), generator=gen) * 7
        guidance = torch.randn((2, 8, 6, 8), generator=gen)
        with torch.no_grad():
            out = up(d, guidance)
        assert out.shape == (2, 24, 32)
        assert (out >= 4 * d.min() - 1e-4).all() and (out <= 4 * d.max() + 1e-4).all()

    def test_misaligned_guidance_rejected(self):
        up = LearnedUpsampler(guidance_channels=8)
        with pytest.raises(ValueError, match="guidance"):
            up(torch.zeros((1, 6, 8)), torch.zeros((1, 8, 5, 8)))
