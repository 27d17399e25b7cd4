"""Random-dot stereogram generator with exact dense ground truth.

Disparity maps are piecewise-constant over rectangular regions, so
occlusions have a closed form: a left pixel is valid iff its target
column lies inside the right image and no nearer (larger-disparity)
pixel claims the same target column.  Valid correspondences satisfy
``right[y, x - d] == left[y, x]`` exactly, channel by channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BACKBONE_STRIDE = 32

# dot edge length in pixels; matches the quarter-resolution stride of the
# cost volume so correlation varies smoothly across disparity candidates
# (single-pixel white-noise dots carry no matching signal at shifts that
# are not multiples of the stride)
DOT_SCALE = 4


@dataclass
class StereoSample:
    """One rectified stereo pair with ground truth.

    left/right are H×W×3 float arrays in [0, 1]; disparity_gt is H×W
    float pixels; valid_mask is H×W bool.
    """

    left: np.ndarray
    right: np.ndarray
    disparity_gt: np.ndarray
    valid_mask: np.ndarray

    def __post_init__(self):
        shape = self.disparity_gt.shape
        if self.left.shape[:2] != shape or self.right.shape[:2] != shape:
            raise ValueError("left/right/disparity shapes disagree")
        if self.valid_mask.shape != shape:
            raise ValueError("valid_mask shape disagrees with disparity")
        if self.valid_mask.dtype != np.bool_:
            raise ValueError("valid_mask must be boolean")
        if np.any(self.disparity_gt[self.valid_mask] < 0):
            raise ValueError("negative disparity on a valid pixel")

    @property
    def height(self) -> int:
        return self.disparity_gt.shape[0]

    @property
    def width(self) -> int:
        return self.disparity_gt.shape[1]


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of one generated random-dot pair."""

    height: int = 96
    width: int = 128
    d_max: int = 32
    num_regions: int = 4
    dot_density: float = 0.9
    seed: int = 0

    def validate(self) -> None:
        if self.d_max >= self.width:
            raise ValueError(f"d_max={self.d_max} must be smaller than width={self.width}")
        if self.d_max % 4 != 0:
            raise ValueError(f"d_max={self.d_max} must be divisible by 4")
        if self.num_regions < 1:
            raise ValueError("num_regions must be >= 1")
        if not 0.0 < self.dot_density <= 1.0:
            raise ValueError("dot_density must be in (0, 1]")
        if self.height < 1 or self.width < 1:
            raise ValueError("height/width must be positive")


def _random_dots(rng: np.random.Generator, height: int, width: int, density: float) -> np.ndarray:
    """Random dot texture with DOT_SCALE-sized dots, already quantized to
    8-bit levels so that a PNG round trip is lossless."""
    rows = -(-height // DOT_SCALE)
    cols = -(-width // DOT_SCALE)
    colors = rng.integers(0, 256, size=(rows, cols, 3)).astype(np.float32) / 255.0
    mask = rng.random((rows, cols)) < density
    coarse = colors * mask[:, :, None]
    fine = np.repeat(np.repeat(coarse, DOT_SCALE, axis=0), DOT_SCALE, axis=1)
    return np.ascontiguousarray(fine[:height, :width])


def random_region_disparity(
    cfg: SyntheticConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Piecewise-constant integer disparity: a full-frame base rectangle
    plus num_regions-1 random rectangles painted over it.

    Returns (disparity, region_ids); the id map lets the renderer texture
    each region independently so depth edges show up as texture seams,
    as they do for real objects.
    """
    disparity = np.full((cfg.height, cfg.width), int(rng.integers(0, cfg.d_max)), dtype=np.int64)
    region_ids = np.zeros((cfg.height, cfg.width), dtype=np.int64)
    for region in range(1, cfg.num_regions):
        rh = int(rng.integers(max(1, cfg.height // 8), max(2, cfg.height // 2)))
        rw = int(rng.integers(max(1, cfg.width // 8), max(2, cfg.width // 2)))
        y0 = int(rng.integers(0, cfg.height - rh + 1))
        x0 = int(rng.integers(0, cfg.width - rw + 1))
        disparity[y0 : y0 + rh, x0 : x0 + rw] = int(rng.integers(0, cfg.d_max))
        region_ids[y0 : y0 + rh, x0 : x0 + rw] = region
    return disparity, region_ids


def render_random_dot_pair(
    disparity: np.ndarray,
    rng: np.random.Generator,
    dot_density: float = 0.9,
    region_ids: np.ndarray | None = None,
) -> StereoSample:
    """Render a photo-consistent pair from an explicit integer disparity map.

    Occlusion rule: when several left pixels map to one right column the
    largest disparity wins; the losers are masked invalid.  Right pixels
    nobody claims are filled with fresh random dots.  When ``region_ids``
    is given, each region gets its own dot field.
    """
    disparity = np.asarray(disparity)
    if np.any(disparity < 0):
        raise ValueError("disparity must be non-negative")
    height, width = disparity.shape
    if region_ids is None:
        left = _random_dots(rng, height, width, dot_density)
    else:
        if region_ids.shape != disparity.shape:
            raise ValueError("region_ids shape disagrees with disparity")
        left = np.zeros((height, width, 3), dtype=np.float32)
        for region in np.unique(region_ids):
            field = _random_dots(rng, height, width, dot_density)
            sel = region_ids == region
            left[sel] = field[sel]
    right = _random_dots(rng, height, width, dot_density)

    yy, xx = np.indices((height, width))
    target = xx - disparity
    in_frame = target >= 0
    ys, xs = np.nonzero(in_frame)
    ts = target[ys, xs]

    # largest source column per target column == largest disparity wins
    claim = np.full((height, width), -1, dtype=np.int64)
    np.maximum.at(claim, (ys, ts), xs)
    won = claim[ys, ts] == xs

    right[ys[won], ts[won]] = left[ys[won], xs[won]]
    valid = np.zeros((height, width), dtype=bool)
    valid[ys[won], xs[won]] = True

    return StereoSample(
        left=left,
        right=right,
        disparity_gt=disparity.astype(np.float32),
        valid_mask=valid,
    )


def generate_random_dot_pair(cfg: SyntheticConfig) -> StereoSample:
    """Generate one deterministic random-dot stereo pair from a config."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    disparity, region_ids = random_region_disparity(cfg, rng)
    return render_random_dot_pair(disparity, rng, cfg.dot_density, region_ids=region_ids)


def crop_sample(sample: StereoSample, top: int, left: int, height: int, width: int) -> StereoSample:
    """Crop a window, reflect-padding (and invalidating) anything that
    falls outside the source image."""
    if height < 1 or width < 1:
        raise ValueError("crop size must be positive")
    pad_h = max(0, top + height - sample.height) + max(0, -top)
    pad_w = max(0, left + width - sample.width) + max(0, -left)
    l_img, r_img = sample.left, sample.right
    disp, mask = sample.disparity_gt, sample.valid_mask
    if pad_h or pad_w:
        pw = ((max(0, -top), max(0, top + height - sample.height)),
              (max(0, -left), max(0, left + width - sample.width)))
        l_img = np.pad(l_img, pw + ((0, 0),), mode="reflect")
        r_img = np.pad(r_img, pw + ((0, 0),), mode="reflect")
        disp = np.pad(disp, pw, mode="reflect")
        # reflected pixels are not real correspondences
        mask = np.pad(mask, pw, mode="constant", constant_values=False)
        top += pw[0][0]
        left += pw[1][0]
    return StereoSample(
        left=l_img[top : top + height, left : left + width].copy(),
        right=r_img[top : top + height, left : left + width].copy(),
        disparity_gt=disp[top : top + height, left : left + width].copy(),
        valid_mask=mask[top : top + height, left : left + width].copy(),
    )


def random_crop(sample: StereoSample, height: int, width: int, rng: np.random.Generator) -> StereoSample:
    top = int(rng.integers(0, max(1, sample.height - height + 1)))
    left = int(rng.integers(0, max(1, sample.width - width + 1)))
    return crop_sample(sample, top, left, height, width)


def color_jitter(
    sample: StereoSample,
    rng: np.random.Generator,
    brightness: float = 0.2,
    contrast: float = 0.2,
) -> StereoSample:
    """Photometric jitter applied identically to both views so the exact
    photo-consistency invariant survives augmentation.  No horizontal flip."""
    gain = 1.0 + float(rng.uniform(-contrast, contrast))
    shift = float(rng.uniform(-brightness, brightness))
    jit = lambda img: np.clip((img - 0.5) * gain + 0.5 + shift, 0.0, 1.0).astype(np.float32)
    return StereoSample(
        left=jit(sample.left),
        right=jit(sample.right),
        disparity_gt=sample.disparity_gt.copy(),
        valid_mask=sample.valid_mask.copy(),
    )


def photo_consistency_fraction(sample: StereoSample) -> float:
    """Fraction of valid pixels whose left/right correspondence holds exactly."""
    ys, xs = np.nonzero(sample.valid_mask)
    if ys.size == 0:
        return 1.0
    d = np.round(sample.disparity_gt[ys, xs]).astype(np.int64)
    match = np.all(sample.right[ys, xs - d] == sample.left[ys, xs], axis=-1)
    return float(match.mean())
