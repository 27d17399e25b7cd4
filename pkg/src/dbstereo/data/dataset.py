"""On-disk synthetic dataset: PNG image pairs, PFM ground truth, JSON manifest.

Layout: ``<root>/<index>_left.png``, ``<index>_right.png``,
``<index>_disp.pfm`` plus ``manifest.json`` listing indices and the
generating config.  Invalid pixels are stored as disparity -1 in the
PFM so the validity mask survives the round trip (generated disparities
are always >= 0).
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .formats import load_pfm, write_pfm
from .synthetic import StereoSample, SyntheticConfig, generate_random_dot_pair

MANIFEST_NAME = "manifest.json"
INVALID_DISPARITY = -1.0


def _save_image(path: Path, img: np.ndarray) -> None:
    Image.fromarray(np.round(img * 255.0).astype(np.uint8)).save(path, format="PNG")


def _load_image(path: Path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0


def save_sample(root: Path, index: int, sample: StereoSample) -> None:
    root = Path(root)
    _save_image(root / f"{index}_left.png", sample.left)
    _save_image(root / f"{index}_right.png", sample.right)
    disp = sample.disparity_gt.copy()
    disp[~sample.valid_mask] = INVALID_DISPARITY
    write_pfm(root / f"{index}_disp.pfm", disp)


def load_sample(root: Path, index: int) -> StereoSample:
    root = Path(root)
    left = _load_image(root / f"{index}_left.png")
    right = _load_image(root / f"{index}_right.png")
    disp, _ = load_pfm(root / f"{index}_disp.pfm")
    valid = disp >= 0
    disp = np.where(valid, disp, 0.0).astype(np.float32)
    return StereoSample(left=left, right=right, disparity_gt=disp, valid_mask=valid)


def write_synthetic_dataset(root: str | Path, count: int, base_cfg: SyntheticConfig) -> list[int]:
    """Generate ``count`` samples (seeds base_cfg.seed .. +count-1) and write
    them plus the manifest.  Returns the sample indices."""
    if count < 1:
        raise ValueError("count must be >= 1")
    base_cfg.validate()
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    indices = list(range(count))
    for index in indices:
        cfg = dataclasses.replace(base_cfg, seed=base_cfg.seed + index)
        save_sample(root, index, generate_random_dot_pair(cfg))
    manifest = {
        "indices": indices,
        "config": dataclasses.asdict(base_cfg),
    }
    with open(root / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return indices


class SyntheticDataset:
    """Reads a dataset directory written by :func:`write_synthetic_dataset`."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        manifest_path = self.root / MANIFEST_NAME
        if not manifest_path.exists():
            raise FileNotFoundError(f"no {MANIFEST_NAME} under {self.root}")
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        self.indices: list[int] = list(manifest["indices"])
        self.config = SyntheticConfig(**manifest["config"])

    def __len__(self) -> int:
        return len(self.indices)

    def __getitem__(self, i: int) -> StereoSample:
        return load_sample(self.root, self.indices[i])

    def split(self, holdout_fraction: float) -> tuple["DatasetView", "DatasetView"]:
        """Deterministic train/holdout split: the tail of the index list
        is held out."""
        if not 0.0 <= holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must be in [0, 1)")
        n_holdout = int(round(len(self) * holdout_fraction))
        n_train = len(self) - n_holdout
        return DatasetView(self, range(n_train)), DatasetView(self, range(n_train, len(self)))


class DatasetView:
    def __init__(self, base, positions):
        self._base = base
        self._positions = list(positions)

    def __len__(self) -> int:
        return len(self._positions)

    def __getitem__(self, i: int) -> StereoSample:
        return self._base[self._positions[i]]
