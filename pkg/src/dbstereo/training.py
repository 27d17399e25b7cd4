"""Loss, optimization loop, checkpointing and the deterministic mode.

The loss is a weighted sum of smooth-L1 terms on the interpolated and
learned upsampling heads (weights 0.3 and 1.0), averaged over valid
pixels so its magnitude does not depend on the crop size.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .data.synthetic import StereoSample, color_jitter, random_crop
from .metrics import epe as epe_metric
from .metrics import outlier_rate
from .model import ModelConfig, StereoModel, sample_to_tensors
from .util import deterministic_requested, enable_determinism, seed_everything

logger = logging.getLogger(__name__)

LAMBDA_INIT = 0.3
LAMBDA_FINAL = 1.0
LATEST_POINTER = "latest"


class TrainingDivergedError(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"loss became non-finite at step {step}")
        self.step = step


def smooth_l1(pred: torch.Tensor, gt: torch.Tensor, mask: torch.Tensor, beta: float = 1.0) -> torch.Tensor:
    """Masked mean smooth-L1: 0.5 e^2 / beta for |e| < beta, else |e| - beta/2.

    Returns 0 (with a warning) when no pixel is valid; masked pixels
    contribute exactly zero gradient.
    """
    if pred.shape != gt.shape or pred.shape != mask.shape:
        raise ValueError(
            f"shape mismatch: pred {tuple(pred.shape)}, gt {tuple(gt.shape)}, "
            f"mask {tuple(mask.shape)}"
        )
    mask = mask.bool()
    if not mask.any():
        logger.warning("smooth_l1: no valid pixels, returning zero loss")
        return pred.sum() * 0.0
    err = (pred - gt).abs()
    per_pixel = torch.where(err < beta, 0.5 * err * err / beta, err - 0.5 * beta)
    return per_pixel[mask].mean()


def total_loss(
    d_init: torch.Tensor,
    d_final: torch.Tensor,
    d_gt: torch.Tensor,
    mask: torch.Tensor,
    lambda_init: float = LAMBDA_INIT,
    lambda_final: float = LAMBDA_FINAL,
) -> torch.Tensor:
    """Weighted two-head supervision on full-resolution disparities."""
    return lambda_init * smooth_l1(d_init, d_gt, mask) + lambda_final * smooth_l1(
        d_final, d_gt, mask
    )


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 4e-4
    batch_size: int = 4
    steps: int = 2000
    seed: int = 0
    lambda_init: float = LAMBDA_INIT
    lambda_final: float = LAMBDA_FINAL
    crop_height: int = 64
    crop_width: int = 96
    color_jitter: bool = True
    deterministic: bool = False
    log_every: int = 50
    eval_every: int = 250
    ckpt_every: int = 500
    early_stop_epe: float = 0.0  # 0 disables early stopping
    holdout_fraction: float = 0.2

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.crop_height % 32 or self.crop_width % 32:
            raise ValueError("crop size must be divisible by 32")


def checkpoint_name(step: int) -> str:
    return f"ckpt_{step}.bin"


def save_checkpoint(path: str | Path, model: StereoModel, step: int) -> None:
    """Atomic checkpoint write: temp file then rename."""
    path = Path(path)
    payload = {
        "state_dict": model.state_dict(),
        "fingerprint": model.cfg.fingerprint(),
        "step": step,
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(payload, tmp)
    os.replace(tmp, path)


def load_checkpoint(path: str | Path, model: StereoModel) -> int:
    """Load weights, rejecting checkpoints trained with another config."""
    payload = torch.load(path, map_location="cpu", weights_only=True)
    expected = model.cfg.fingerprint()
    if payload.get("fingerprint") != expected:
        raise ValueError(
            f"checkpoint fingerprint {payload.get('fingerprint')!r} does not match the "
            f"requested model config ({expected})"
        )
    model.load_state_dict(payload["state_dict"])
    return int(payload.get("step", 0))


def write_latest_pointer(out_dir: Path, name: str) -> None:
    (out_dir / LATEST_POINTER).write_text(name + "\n", encoding="utf-8")


def read_latest_checkpoint(out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    name = (out_dir / LATEST_POINTER).read_text(encoding="utf-8").strip()
    return out_dir / name


def _make_batch(dataset, rng: np.random.Generator, cfg: TrainConfig):
    idx = rng.integers(0, len(dataset), size=cfg.batch_size)
    lefts, rights, disps, masks = [], [], [], []
    for i in idx:
        sample: StereoSample = dataset[int(i)]
        if sample.height != cfg.crop_height or sample.width != cfg.crop_width:
            sample = random_crop(sample, cfg.crop_height, cfg.crop_width, rng)
        if cfg.color_jitter:
            sample = color_jitter(sample, rng)
        l, r, d, m = sample_to_tensors(sample)
        lefts.append(l)
        rights.append(r)
        disps.append(d)
        masks.append(m)
    cat = lambda parts: torch.cat(parts, dim=0)
    return cat(lefts), cat(rights), cat(disps), cat(masks)


@torch.no_grad()
def evaluate_model(model: StereoModel, dataset) -> tuple[float, float]:
    """Held-out (EPE, >3px rate) of the learned-upsampling head."""
    was_training = model.training
    model.eval()
    errs = []
    for i in range(len(dataset)):
        left, right, disp, mask = sample_to_tensors(dataset[i])
        pred = model(left, right)
        p = pred.d_final[0].cpu().numpy()
        g = disp[0].cpu().numpy()
        m = mask[0].cpu().numpy()
        errs.append((epe_metric(p, g, m), outlier_rate(p, g, m, threshold=3.0)))
    if was_training:
        model.train()
    usable = [(e, o) for e, o in errs if math.isfinite(e)]
    if not usable:
        return float("nan"), float("nan")
    return (
        float(np.mean([e for e, _ in usable])),
        float(np.mean([o for _, o in usable])),
    )


class MetricLog:
    """Line-delimited metric records; wall time is zeroed in deterministic
    mode so two runs with one seed produce byte-identical logs."""

    def __init__(self, path: Path, deterministic: bool):
        self.path = path
        self.deterministic = deterministic
        self._fh = open(path, "w", encoding="utf-8")

    def write(self, step: int, split: str, loss: float, epe_val: float, d1: float, wall_ms: float):
        record = {
            "step": step,
            "split": split,
            "loss": round(float(loss), 8),
            "epe": round(float(epe_val), 8) if math.isfinite(epe_val) else None,
            "d1": round(float(d1), 8) if math.isfinite(d1) else None,
            "wall_ms": 0.0 if self.deterministic else round(float(wall_ms), 3),
        }
        self._fh.write(json.dumps(record) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()


def train(
    model_cfg: ModelConfig,
    dataset,
    cfg: TrainConfig,
    out_dir: str | Path,
    val_dataset=None,
) -> StereoModel:
    """Train a model on a sample source, writing checkpoints and metrics.

    ``dataset`` is any integer-indexable source of StereoSamples.  When
    ``val_dataset`` is None, the tail ``holdout_fraction`` of ``dataset``
    is held out.
    """
    cfg.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    deterministic = deterministic_requested(cfg.deterministic)
    if deterministic:
        enable_determinism(cfg.seed)
    else:
        seed_everything(cfg.seed)

    if val_dataset is None and hasattr(dataset, "split"):
        dataset, val_dataset = dataset.split(cfg.holdout_fraction)

    model = StereoModel(model_cfg)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    scheduler = torch.optim.lr_scheduler.OneCycleLR(
        optimizer, max_lr=cfg.lr, total_steps=cfg.steps
    )
    rng = np.random.default_rng(cfg.seed)
    log = MetricLog(out_dir / "metrics.jsonl", deterministic)

    with open(out_dir / "train_config.json", "w", encoding="utf-8") as fh:
        json.dump({"train": asdict(cfg), "model": asdict(model_cfg)}, fh, indent=2, sort_keys=True)

    step = 0
    try:
        for step in range(1, cfg.steps + 1):
            t0 = time.perf_counter()
            left, right, disp, mask = _make_batch(dataset, rng, cfg)
            optimizer.zero_grad()
            try:
                pred = model(left, right)
                loss = total_loss(
                    pred.d_init, pred.d_final, disp, mask,
                    lambda_init=cfg.lambda_init, lambda_final=cfg.lambda_final,
                )
            except ValueError as exc:
                # runaway weights surface as non-finite scores in the forward
                if "finite" in str(exc):
                    log.write(step, "train", float("nan"), float("nan"), float("nan"), 0.0)
                    raise TrainingDivergedError(step) from exc
                raise
            if not torch.isfinite(loss):
                log.write(step, "train", float("nan"), float("nan"), float("nan"), 0.0)
                raise TrainingDivergedError(step)
            loss.backward()
            optimizer.step()
            scheduler.step()
            wall_ms = (time.perf_counter() - t0) * 1e3

            if step % cfg.log_every == 0 or step == cfg.steps:
                with torch.no_grad():
                    p = pred.d_final.detach().cpu().numpy()
                    g = disp.cpu().numpy()
                    m = mask.cpu().numpy()
                log.write(
                    step, "train", loss.item(),
                    epe_metric(p, g, m), outlier_rate(p, g, m, threshold=3.0), wall_ms,
                )

            stop = False
            if val_dataset is not None and len(val_dataset) > 0 and (
                step % cfg.eval_every == 0 or step == cfg.steps
            ):
                t1 = time.perf_counter()
                val_epe, val_d1 = evaluate_model(model, val_dataset)
                log.write(step, "val", loss.item(), val_epe, val_d1, (time.perf_counter() - t1) * 1e3)
                if cfg.early_stop_epe > 0 and val_epe < cfg.early_stop_epe:
                    logger.info("early stop at step %d (val EPE %.3f)", step, val_epe)
                    stop = True

            if step % cfg.ckpt_every == 0 or step == cfg.steps or stop:
                name = checkpoint_name(step)
                save_checkpoint(out_dir / name, model, step)
                write_latest_pointer(out_dir, name)
            if stop:
                break
    finally:
        log.close()

    model.eval()
    return model
