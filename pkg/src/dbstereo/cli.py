"""Command-line entry point.

Subcommands: synth-gen, train, eval, infer, bench, selftest.  Exit codes:
0 success, 2 usage error, 3 config error, 4 runtime failure.  Every run
writes its fully resolved config next to its outputs so it can be
reproduced exactly.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .config import ConfigError, RunConfig, load_run_config
from .data.dataset import SyntheticDataset, write_synthetic_dataset
from .data.formats import load_pfm, write_kitti_disparity_png, write_pfm
from .data.synthetic import SyntheticConfig
from .metrics import evaluate_batch
from .model import ModelConfig, StereoModel, sample_to_tensors
from .training import TrainConfig, load_checkpoint, read_latest_checkpoint, train
from .util import deterministic_requested, enable_determinism

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_RUNTIME = 4

# fixed visualization conventions: disparities on turbo over [0, d_max],
# absolute errors on magma over [0, 5] px
DISPARITY_COLORMAP = "turbo"
ERROR_COLORMAP = "magma"
ERROR_RANGE_PX = 5.0

logger = logging.getLogger(__name__)


def _model_config(cfg: RunConfig) -> ModelConfig:
    variant = cfg["agg.variant"] or cfg["model.variant"]
    return ModelConfig(
        variant=variant,
        max_disparity=cfg["model.max_disparity"],
        paradigm=cfg["agg.paradigm"],
        num_stages=cfg["agg.num_stages"],
        blocks_per_stage=cfg["agg.blocks_per_stage"],
        use_attention=cfg["agg.use_attention"],
        spatial_dense=cfg["agg.spatial_dense"],
        conv3d_channels=cfg["agg.conv3d_channels"],
    )


def _train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        lr=cfg["train.lr"],
        batch_size=cfg["train.batch_size"],
        steps=cfg["train.steps"],
        seed=cfg["train.seed"],
        lambda_init=cfg["train.lambda_init"],
        lambda_final=cfg["train.lambda_final"],
        crop_height=cfg["train.crop_height"],
        crop_width=cfg["train.crop_width"],
        color_jitter=cfg["train.color_jitter"],
        deterministic=cfg["train.deterministic"],
        log_every=cfg["train.log_every"],
        eval_every=cfg["train.eval_every"],
        ckpt_every=cfg["train.ckpt_every"],
        early_stop_epe=cfg["train.early_stop_epe"],
        holdout_fraction=cfg["train.holdout_fraction"],
    )


def _synthetic_config(cfg: RunConfig, seed: int | None = None) -> SyntheticConfig:
    return SyntheticConfig(
        height=cfg["data.height"],
        width=cfg["data.width"],
        d_max=cfg["data.d_max"],
        num_regions=cfg["data.num_regions"],
        dot_density=cfg["data.dot_density"],
        seed=cfg["data.seed"] if seed is None else seed,
    )


def _dump_resolved(cfg: RunConfig, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg.dump(out_dir / "resolved_config.txt")


def _load_image(path: str) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0


def _colormap_png(path: Path, values: np.ndarray, vmin: float, vmax: float, cmap_name: str) -> None:
    from matplotlib import colormaps

    cmap = colormaps[cmap_name]
    normed = np.clip((values - vmin) / max(vmax - vmin, 1e-12), 0.0, 1.0)
    rgba = cmap(normed)
    Image.fromarray((rgba[..., :3] * 255).astype(np.uint8)).save(path, format="PNG")


def _restore_model(ckpt: str, cfg: RunConfig) -> StereoModel:
    model = StereoModel(_model_config(cfg))
    path = Path(ckpt)
    if path.is_dir():
        path = read_latest_checkpoint(path)
    load_checkpoint(path, model)
    model.eval()
    return model


def cmd_synth_gen(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    base = _synthetic_config(cfg, seed=args.seed)
    write_synthetic_dataset(out, args.count, base)
    _dump_resolved(cfg, out)
    print(f"wrote {args.count} samples to {out}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    _dump_resolved(cfg, out)
    dataset = SyntheticDataset(args.data)
    train(_model_config(cfg), dataset, _train_config(cfg), out)
    print(f"training finished; artifacts in {out}")
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    dataset = SyntheticDataset(args.data)
    out_dir = Path(args.out) if args.out else Path(args.data)
    _dump_resolved(cfg, out_dir)

    if args.predictor == "gt":
        predict = lambda sample: sample.disparity_gt
    else:
        if not args.ckpt or args.ckpt == "none":
            raise ConfigError("--predictor model requires --ckpt")
        model = _restore_model(args.ckpt, cfg)
        import torch

        def predict(sample):
            left, right, _, _ = sample_to_tensors(sample)
            with torch.no_grad():
                return model(left, right).d_final[0].cpu().numpy()

    triples = []
    for i in range(len(dataset)):
        sample = dataset[i]
        triples.append((predict(sample), sample.disparity_gt, sample.valid_mask))
    report = evaluate_batch(triples)
    print(report.format_table())
    report.save(out_dir / "eval_report.jsonl")
    return EXIT_OK


def cmd_infer(args, cfg: RunConfig) -> int:
    import torch

    if deterministic_requested(cfg["train.deterministic"]):
        enable_determinism(cfg["train.seed"])
    out = Path(args.out)
    _dump_resolved(cfg, out)
    model = _restore_model(args.ckpt, cfg)
    left = _load_image(args.left)
    right = _load_image(args.right)
    if left.shape != right.shape:
        raise ConfigError(f"left/right sizes differ: {left.shape} vs {right.shape}")

    to = lambda img: torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1)))[None]
    with torch.no_grad():
        pred = model(to(left), to(right))
    disparity = pred.d_final[0].cpu().numpy().astype(np.float32)

    write_pfm(out / "disparity.pfm", disparity)
    write_kitti_disparity_png(out / "disparity_kitti.png", disparity)
    _colormap_png(
        out / "disparity_color.png", disparity, 0.0, float(cfg["model.max_disparity"]),
        DISPARITY_COLORMAP,
    )
    if args.gt:
        gt, _ = load_pfm(args.gt)
        if gt.shape != disparity.shape:
            raise ConfigError(f"GT shape {gt.shape} does not match prediction {disparity.shape}")
        _colormap_png(
            out / "error_map.png", np.abs(disparity - gt), 0.0, ERROR_RANGE_PX, ERROR_COLORMAP
        )
    print(f"inference artifacts in {out}")
    return EXIT_OK


def cmd_bench(args, cfg: RunConfig) -> int:
    from .bench import compare_paradigms

    shapes = []
    for spec_str in args.shapes.split(","):
        parts = spec_str.strip().split("x")
        if len(parts) != 3:
            raise ConfigError(f"--shapes expects DxHxW triples, got {spec_str!r}")
        shapes.append(tuple(int(p) for p in parts))
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    report = compare_paradigms(
        variants=variants, shapes=shapes, warmup=cfg["bench.warmup"], iters=cfg["bench.iters"]
    )
    print(report.format_table())
    if args.out:
        out = Path(args.out)
        _dump_resolved(cfg, out.parent if out.suffix else out)
        target = out if out.suffix else out / "bench_report.jsonl"
        target.parent.mkdir(parents=True, exist_ok=True)
        report.save(target)
    return EXIT_OK


def cmd_selftest(args, cfg: RunConfig) -> int:
    from .selftest import run_selftest

    return EXIT_OK if run_selftest() else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dbstereo",
        description="Decoupled bidirectional stereo matching toolkit",
    )
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", dest="overrides",
        help="override one config key (repeatable)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-gen", help="generate a synthetic random-dot dataset")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth_gen)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a predictor on a dataset directory")
    p.add_argument("--ckpt", default="none", help="checkpoint file or training dir, or 'none'")
    p.add_argument("--data", required=True)
    p.add_argument("--predictor", choices=("model", "gt"), default="model")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="predict disparity for one rectified pair")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--left", required=True)
    p.add_argument("--right", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gt", default=None, help="optional PFM ground truth for an error map")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("bench", help="compare aggregation paradigms")
    p.add_argument("--shapes", default="8x24x32,16x48x64", help="comma-separated DxHxW list")
    p.add_argument("--variants", default="tiny,S")
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--warmup", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("selftest", help="run the built-in invariant suite")
    p.set_defaults(func=cmd_selftest)
    return parser


def dispatch(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = load_run_config(args.config, args.overrides)
        if getattr(args, "iters", None) is not None:
            cfg.set("bench.iters", args.iters)
        if getattr(args, "warmup", None) is not None:
            cfg.set("bench.warmup", args.warmup)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        logger.exception("command failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(dispatch())
