"""Performance harness: analytic FLOP counts, wall-clock latency, paradigm comparison.

FLOPs are counted from layer shapes with the closed-form convolution
formula (2 * output elements * kernel volume * in_channels / groups),
never from a profiler.  Latency is the median of timed iterations after
warmup and an explicit synchronization barrier; only orderings between
paradigms are ever gated, absolute milliseconds are report-only.
"""

from __future__ import annotations

import json
import platform
import statistics
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn as nn
from filelock import FileLock, Timeout

from .aggregation import (
    BGAAggregator,
    BGAConfig,
    Conv3DAggregator,
    count_parameters,
    match_conv3d_channels,
)
from .model import _VARIANT_BLOCKS, _VARIANT_GROUPS

MIN_WARMUP = 10
MIN_ITERS = 30

_COUNTED_LAYERS = (nn.Conv2d, nn.Conv3d, nn.Linear)
_BENCH_LOCK = FileLock(str(Path(tempfile.gettempdir()) / "dbstereo_bench.lock"))


class BenchmarkBusyError(RuntimeError):
    """Another process holds the benchmark lock."""


class BenchmarkAbortedError(RuntimeError):
    """The measured callable raised; the partial latency series is kept."""

    def __init__(self, cause: BaseException, series_ms: list[float]):
        super().__init__(f"benchmark aborted after {len(series_ms)} iterations: {cause}")
        self.series_ms = series_ms
        self.__cause__ = cause


@dataclass
class LayerFlops:
    name: str
    kind: str
    flops: int
    params: int
    output_shape: tuple[int, ...]


@dataclass
class FlopCount:
    total: int
    per_layer: list[LayerFlops] = field(default_factory=list)


def _layer_flops(module: nn.Module, output: torch.Tensor) -> int:
    out_elements = output.numel()
    if isinstance(module, (nn.Conv2d, nn.Conv3d)):
        kernel_volume = int(np.prod(module.kernel_size))
        return 2 * out_elements * kernel_volume * module.in_channels // module.groups
    if isinstance(module, nn.Linear):
        return 2 * out_elements * module.in_features
    raise TypeError(f"unsupported layer type {type(module).__name__}")


def count_flops(module: nn.Module, *input_shapes: Sequence[int]) -> FlopCount:
    """Analytic FLOPs of every conv/linear layer for unbatched input shapes.

    Layer output shapes are resolved by one tracing pass over zero
    tensors; the counts themselves come from the closed-form formula.
    """
    if not input_shapes:
        raise ValueError("at least one input shape is required")
    records: list[LayerFlops] = []
    hooks = []

    def make_hook(name, layer):
        def hook(_mod, _inp, output):
            records.append(
                LayerFlops(
                    name=name,
                    kind=type(layer).__name__,
                    flops=_layer_flops(layer, output),
                    params=sum(p.numel() for p in layer.parameters()),
                    output_shape=tuple(output.shape),
                )
            )
        return hook

    for name, layer in module.named_modules():
        if isinstance(layer, _COUNTED_LAYERS):
            hooks.append(layer.register_forward_hook(make_hook(name, layer)))

    was_training = module.training
    module.eval()
    try:
        inputs = [torch.zeros((1, *shape)) for shape in input_shapes]
        with torch.no_grad():
            module(*inputs)
    finally:
        for handle in hooks:
            handle.remove()
        if was_training:
            module.train()

    if not records:
        raise ValueError("module has no conv/linear layers whose shapes can be resolved")
    return FlopCount(total=sum(r.flops for r in records), per_layer=records)


@dataclass
class LatencyStats:
    median_ms: float
    p95_ms: float
    mean_ms: float
    series_ms: list[float]
    warmup: int
    iters: int
    hardware: str
    clock: str = "time.perf_counter"


def hardware_descriptor() -> str:
    device = "cuda" if torch.cuda.is_available() else "cpu"
    return (
        f"{platform.machine()} {device} threads={torch.get_num_threads()} "
        f"torch={torch.__version__}"
    )


def _synchronize() -> None:
    if torch.cuda.is_available():
        torch.cuda.synchronize()


def measure_latency(fn: Callable[[], object], warmup: int = MIN_WARMUP, iters: int = MIN_ITERS) -> LatencyStats:
    """Median/p95 wall time of ``fn`` over ``iters`` runs after ``warmup``.

    Raises BenchmarkBusyError if another benchmark holds the lock, and
    BenchmarkAbortedError (with the partial series) if ``fn`` raises.
    """
    if warmup < MIN_WARMUP:
        raise ValueError(f"warmup must be >= {MIN_WARMUP}, got {warmup}")
    if iters < MIN_ITERS:
        raise ValueError(f"iters must be >= {MIN_ITERS}, got {iters}")
    series: list[float] = []
    try:
        with _BENCH_LOCK.acquire(timeout=0):
            try:
                for _ in range(warmup):
                    fn()
                _synchronize()
                for _ in range(iters):
                    t0 = time.perf_counter()
                    fn()
                    _synchronize()
                    series.append((time.perf_counter() - t0) * 1e3)
            except BenchmarkBusyError:
                raise
            except Exception as exc:
                raise BenchmarkAbortedError(exc, series) from exc
    except Timeout as exc:
        raise BenchmarkBusyError("another benchmark is already running") from exc
    return LatencyStats(
        median_ms=float(statistics.median(series)),
        p95_ms=float(np.percentile(series, 95)),
        mean_ms=float(statistics.fmean(series)),
        series_ms=series,
        warmup=warmup,
        iters=iters,
        hardware=hardware_descriptor(),
    )


@dataclass
class BenchRow:
    name: str
    paradigm: str
    variant: str
    input_shape: list[int]
    params: int
    flops: int
    latency_median_ms: float
    latency_p95_ms: float
    warmup: int
    iters: int
    hardware: str


@dataclass
class PairResult:
    variant: str
    input_shape: list[int]
    param_ratio: float
    flops_ok: bool
    latency_ok: bool


@dataclass
class BenchmarkReport:
    rows: list[BenchRow] = field(default_factory=list)
    pairs: list[PairResult] = field(default_factory=list)

    def to_records(self) -> str:
        lines = [json.dumps({"kind": "row", **asdict(r)}) for r in self.rows]
        lines += [json.dumps({"kind": "pair", **asdict(p)}) for p in self.pairs]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_records(text: str) -> "BenchmarkReport":
        report = BenchmarkReport()
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.pop("kind")
            if kind == "row":
                report.rows.append(BenchRow(**rec))
            elif kind == "pair":
                report.pairs.append(PairResult(**rec))
            else:
                raise ValueError(f"unknown record kind {kind!r}")
        return report

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_records(), encoding="utf-8")

    @staticmethod
    def load(path: str | Path) -> "BenchmarkReport":
        return BenchmarkReport.from_records(Path(path).read_text(encoding="utf-8"))

    def format_table(self) -> str:
        header = (
            f"{'aggregator':>14} {'input (C/G,D,H,W)':>20} {'params':>10} "
            f"{'MFLOPs':>10} {'median ms':>10} {'p95 ms':>10}"
        )
        lines = [header, "-" * len(header)]
        for r in self.rows:
            shape = "x".join(str(s) for s in r.input_shape)
            lines.append(
                f"{r.name:>14} {shape:>20} {r.params:>10d} "
                f"{r.flops / 1e6:>10.1f} {r.latency_median_ms:>10.3f} {r.latency_p95_ms:>10.3f}"
            )
        lines.append("-" * len(header))
        for p in self.pairs:
            shape = "x".join(str(s) for s in p.input_shape)
            lines.append(
                f"pair {p.variant:>6} @ {shape:<14} params ratio {p.param_ratio:.3f}  "
                f"FLOPs: {'pass' if p.flops_ok else 'FAIL'}  "
                f"latency: {'pass' if p.latency_ok else 'FAIL'}"
            )
        return "\n".join(lines)


DEFAULT_SHAPES: tuple[tuple[int, int, int], ...] = ((8, 24, 32), (16, 48, 64))
DEFAULT_VARIANTS: tuple[str, ...] = ("tiny", "S")


def build_paradigm_pair(variant: str, disparity_levels: int, tolerance: float = 0.10):
    """A decoupled aggregator and its parameter-matched 3D baseline."""
    if variant not in _VARIANT_GROUPS:
        raise ValueError(f"unknown variant {variant!r}")
    groups = _VARIANT_GROUPS[variant]
    bga = BGAAggregator(
        BGAConfig(
            groups=groups,
            disparity_levels=disparity_levels,
            blocks_per_stage=_VARIANT_BLOCKS[variant],
        )
    )
    c3_cfg = match_conv3d_channels(count_parameters(bga), groups, tolerance=tolerance)
    return bga, Conv3DAggregator(c3_cfg)


def compare_paradigms(
    variants: Sequence[str] = DEFAULT_VARIANTS,
    shapes: Sequence[tuple[int, int, int]] = DEFAULT_SHAPES,
    warmup: int = MIN_WARMUP,
    iters: int = MIN_ITERS,
    tolerance: float = 0.10,
    seed: int = 0,
) -> BenchmarkReport:
    """Benchmark every (variant, shape) pair of aggregators.

    Shapes are (D, H4, W4) at quarter resolution.  Parameter budgets must
    match within ``tolerance`` or the pair is rejected outright.
    """
    report = BenchmarkReport()
    for variant in variants:
        if variant not in _VARIANT_GROUPS:
            raise ValueError(f"unknown variant {variant!r}")
        groups = _VARIANT_GROUPS[variant]
        for d, h, w in shapes:
            bga, conv3 = build_paradigm_pair(variant, d, tolerance=tolerance)
            bga.eval()
            conv3.eval()
            p_bga, p_c3 = count_parameters(bga), count_parameters(conv3)
            ratio = p_c3 / p_bga
            if abs(ratio - 1.0) > tolerance:
                raise ValueError(
                    f"parameter budgets unmatched for {variant} (ratio {ratio:.3f})"
                )
            gen = torch.Generator().manual_seed(seed)
            vol3d = torch.randn((1, groups * d, h, w), generator=gen)
            vol4d = torch.randn((1, groups, d, h, w), generator=gen)

            flops_bga = count_flops(bga, (groups * d, h, w)).total
            flops_c3 = count_flops(conv3, (groups, d, h, w)).total
            with torch.no_grad():
                lat_bga = measure_latency(lambda: bga(vol3d), warmup, iters)
                lat_c3 = measure_latency(lambda: conv3(vol4d), warmup, iters)

            report.rows.append(
                BenchRow(
                    name=f"bga-{variant}", paradigm="bga", variant=variant,
                    input_shape=[groups * d, h, w], params=p_bga, flops=flops_bga,
                    latency_median_ms=lat_bga.median_ms, latency_p95_ms=lat_bga.p95_ms,
                    warmup=warmup, iters=iters, hardware=lat_bga.hardware,
                )
            )
            report.rows.append(
                BenchRow(
                    name=f"conv3d-{variant}", paradigm="conv3d", variant=variant,
                    input_shape=[groups, d, h, w], params=p_c3, flops=flops_c3,
                    latency_median_ms=lat_c3.median_ms, latency_p95_ms=lat_c3.p95_ms,
                    warmup=warmup, iters=iters, hardware=lat_c3.hardware,
                )
            )
            report.pairs.append(
                PairResult(
                    variant=variant,
                    input_shape=[d, h, w],
                    param_ratio=ratio,
                    flops_ok=flops_bga < flops_c3,
                    latency_ok=lat_bga.median_ms < lat_c3.median_ms,
                )
            )
    return report
