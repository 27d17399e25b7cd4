"""Evaluation metrics and disparity-distribution diagnostics.

EPE is the mean absolute error over valid pixels; outlier rates use a
strict ``error > threshold`` comparison.  The 3px outlier rate reported
here is the plain thresholded rate; the official KITTI compound rule
(error > 3px AND > 5% of ground truth) is available behind a flag.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

PEAK_RATIO_CAP = 1e6


def _masked(pred, gt, mask):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    if mask is None:
        mask = np.ones(pred.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != pred.shape:
        raise ValueError(f"mask shape {mask.shape} does not match maps {pred.shape}")
    return pred[mask], gt[mask]


def epe(pred, gt, mask=None) -> float:
    """Mean absolute disparity error over valid pixels; NaN if none are valid."""
    p, g = _masked(pred, gt, mask)
    if p.size == 0:
        return float("nan")
    return float(np.abs(p - g).mean())


def outlier_rate(pred, gt, mask=None, threshold: float = 3.0, kitti_compound: bool = False) -> float:
    """Percentage of valid pixels with error strictly greater than ``threshold``.

    ``kitti_compound=True`` additionally requires the error to exceed 5%
    of the ground-truth disparity (the official KITTI D1 rule).
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    p, g = _masked(pred, gt, mask)
    if p.size == 0:
        return float("nan")
    err = np.abs(p - g)
    bad = err > threshold
    if kitti_compound:
        bad &= err > 0.05 * np.abs(g)
    return float(100.0 * bad.mean())


@dataclass
class ImageEval:
    epe: float
    d1_1px: float
    d1_3px: float
    valid_count: int


@dataclass
class EvalReport:
    epe: float
    d1_1px: float
    d1_3px: float
    valid_count: int
    per_image: list[ImageEval] = field(default_factory=list)

    def to_records(self) -> str:
        lines = [json.dumps({"scope": "aggregate", **_finite_dict(self, skip=("per_image",))})]
        for i, img in enumerate(self.per_image):
            lines.append(json.dumps({"scope": "image", "index": i, **_finite_dict(img)}))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_records(text: str) -> "EvalReport":
        agg = None
        per_image = []
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            scope = rec.pop("scope")
            if scope == "aggregate":
                agg = rec
            else:
                rec.pop("index", None)
                per_image.append(ImageEval(**_nan_dict(rec)))
        if agg is None:
            raise ValueError("no aggregate record found")
        return EvalReport(per_image=per_image, **_nan_dict(agg))

    def format_table(self) -> str:
        header = f"{'image':>8} {'EPE(px)':>10} {'>1px(%)':>10} {'>3px(%)':>10} {'valid':>10}"
        rows = [header, "-" * len(header)]
        for i, img in enumerate(self.per_image):
            rows.append(
                f"{i:>8d} {img.epe:>10.4f} {img.d1_1px:>10.3f} {img.d1_3px:>10.3f} {img.valid_count:>10d}"
            )
        rows.append("-" * len(header))
        rows.append(
            f"{'all':>8} {self.epe:>10.4f} {self.d1_1px:>10.3f} {self.d1_3px:>10.3f} {self.valid_count:>10d}"
        )
        return "\n".join(rows)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_records(), encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "EvalReport":
        return EvalReport.from_records(Path(path).read_text(encoding="utf-8"))


def _finite_dict(obj, skip=()):
    out = {}
    for key, value in asdict(obj).items():
        if key in skip:
            continue
        if isinstance(value, float) and math.isnan(value):
            value = None
        out[key] = value
    return out


def _nan_dict(rec):
    return {k: (float("nan") if v is None else v) for k, v in rec.items()}


def evaluate_image(pred, gt, mask=None) -> ImageEval:
    p, _ = _masked(pred, gt, mask)
    return ImageEval(
        epe=epe(pred, gt, mask),
        d1_1px=outlier_rate(pred, gt, mask, threshold=1.0),
        d1_3px=outlier_rate(pred, gt, mask, threshold=3.0),
        valid_count=int(p.size),
    )


def evaluate_batch(pairs) -> EvalReport:
    """Aggregate over (pred, gt, mask) triples; pixels are pooled so large
    images weigh more.  Images with an empty mask are excluded."""
    per_image = [evaluate_image(p, g, m) for p, g, m in pairs]
    usable = [img for img in per_image if img.valid_count > 0]
    total = sum(img.valid_count for img in usable)
    if total == 0:
        return EvalReport(
            epe=float("nan"), d1_1px=float("nan"), d1_3px=float("nan"),
            valid_count=0, per_image=per_image,
        )
    pool = lambda attr: sum(getattr(i, attr) * i.valid_count for i in usable) / total
    return EvalReport(
        epe=pool("epe"),
        d1_1px=pool("d1_1px"),
        d1_3px=pool("d1_3px"),
        valid_count=total,
        per_image=per_image,
    )


def distribution_diagnostics(
    prob_volume, tolerance: float = 1e-4, peak_cap: float = PEAK_RATIO_CAP
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel Shannon entropy (nats) and peak ratio of a probability volume.

    Args:
        prob_volume: (D, H, W) softmax probabilities; columns must sum to
            1 within ``tolerance``.

    Returns:
        (entropy, peak_ratio) maps; peak_ratio = p_max / p_second, capped
        at ``peak_cap`` for degenerate one-hot columns.
    """
    prob = np.asarray(prob_volume, dtype=np.float64)
    if prob.ndim != 3:
        raise ValueError(f"expected a (D, H, W) volume, got shape {prob.shape}")
    sums = prob.sum(axis=0)
    if np.any(np.abs(sums - 1.0) > tolerance):
        worst = float(np.abs(sums - 1.0).max())
        raise ValueError(f"probability columns drift from 1 by {worst:.2e} (> {tolerance:.0e})")
    if np.any(prob < 0):
        raise ValueError("negative probabilities")

    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(prob > 0, prob * np.log(prob), 0.0)
    entropy = -plogp.sum(axis=0)

    top2 = np.sort(prob, axis=0)[-2:]
    second, first = top2[0], top2[1]
    with np.errstate(divide="ignore"):
        ratio = np.where(second > 0, first / np.maximum(second, 1e-300), np.inf)
    return entropy, np.minimum(ratio, peak_cap)
