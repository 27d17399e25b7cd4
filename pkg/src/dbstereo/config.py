"""Flat dotted-key run configuration.

A config file is plain ``key = value`` lines (``#`` comments allowed);
command-line ``--set key=value`` overrides win.  Unknown keys are
rejected so typos cannot silently change an experiment, and every run
dumps its fully resolved config for exact re-runs.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Unknown key, unparsable value or malformed config file."""


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot parse boolean from {text!r}")


# key -> (type, default, help)
KEY_REGISTRY: dict[str, tuple[type, Any, str]] = {
    "data.height": (int, 96, "generated sample height in pixels"),
    "data.width": (int, 128, "generated sample width in pixels"),
    "data.d_max": (int, 32, "disparity range of generated samples (multiple of 4)"),
    "data.num_regions": (int, 4, "piecewise-constant disparity regions per sample"),
    "data.dot_density": (float, 0.9, "fraction of random-dot pixels"),
    "data.seed": (int, 0, "base seed for dataset generation"),
    "model.variant": (str, "tiny", "model size: tiny, S, M or L"),
    "model.max_disparity": (int, 32, "full-resolution disparity range (multiple of 4)"),
    "agg.paradigm": (str, "bga", "aggregation paradigm: bga or conv3d"),
    "agg.num_stages": (int, 2, "encoder scales beyond quarter resolution"),
    "agg.blocks_per_stage": (int, 0, "aggregation pairs per scale (0 = variant default)"),
    "agg.use_attention": (bool, False, "enable the spatial attention gate"),
    "agg.variant": (str, "", "aggregator variant override (empty = model.variant)"),
    "agg.spatial_dense": (bool, False, "ablation: ungrouped 3x3 spatial aggregation"),
    "agg.conv3d_channels": (int, 0, "3D baseline width (0 = parameter-match bga)"),
    "train.lr": (float, 4e-4, "one-cycle peak learning rate"),
    "train.batch_size": (int, 4, "samples per optimization step"),
    "train.steps": (int, 2000, "optimization steps"),
    "train.seed": (int, 0, "training seed"),
    "train.lambda_init": (float, 0.3, "weight of the interpolated-head loss term"),
    "train.lambda_final": (float, 1.0, "weight of the learned-head loss term"),
    "train.crop_height": (int, 64, "training crop height (multiple of 32)"),
    "train.crop_width": (int, 96, "training crop width (multiple of 32)"),
    "train.color_jitter": (bool, True, "photometric jitter applied to both views"),
    "train.deterministic": (bool, False, "bit-reproducible training (see DBS_DETERMINISTIC)"),
    "train.log_every": (int, 50, "steps between train metric records"),
    "train.eval_every": (int, 250, "steps between held-out evaluations"),
    "train.ckpt_every": (int, 500, "steps between checkpoints"),
    "train.early_stop_epe": (float, 0.0, "stop when held-out EPE drops below (0 = off)"),
    "train.holdout_fraction": (float, 0.2, "tail fraction of the dataset held out"),
    "bench.iters": (int, 30, "timed iterations per measurement"),
    "bench.warmup": (int, 10, "warmup iterations per measurement"),
}


class RunConfig:
    """Resolved view of defaults, config-file keys and --set overrides."""

    def __init__(self, values: dict[str, Any] | None = None):
        self._values = {key: default for key, (_, default, _) in KEY_REGISTRY.items()}
        for key, value in (values or {}).items():
            self.set(key, value)

    @staticmethod
    def parse_value(key: str, raw: str) -> Any:
        if key not in KEY_REGISTRY:
            raise ConfigError(f"unknown config key {key!r}")
        kind = KEY_REGISTRY[key][0]
        try:
            if kind is bool:
                return _parse_bool(raw)
            return kind(raw.strip())
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc

    def set(self, key: str, value: Any) -> None:
        if key not in KEY_REGISTRY:
            raise ConfigError(f"unknown config key {key!r}")
        kind = KEY_REGISTRY[key][0]
        if isinstance(value, str) and kind is not str:
            value = self.parse_value(key, value)
        if not isinstance(value, kind):
            raise ConfigError(f"{key} expects {kind.__name__}, got {type(value).__name__}")
        self._values[key] = value

    def __getitem__(self, key: str) -> Any:
        if key not in KEY_REGISTRY:
            raise ConfigError(f"unknown config key {key!r}")
        return self._values[key]

    def load_file(self, path: str | Path) -> None:
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            self._values[key] = self.parse_value(key, raw)

    def apply_overrides(self, overrides: list[str]) -> None:
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            key, raw = (part.strip() for part in item.split("=", 1))
            self._values[key] = self.parse_value(key, raw)

    def resolved_text(self) -> str:
        return "\n".join(f"{key} = {self._values[key]}" for key in sorted(self._values)) + "\n"

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(self.resolved_text(), encoding="utf-8")


def load_run_config(config_path: str | None, overrides: list[str] | None) -> RunConfig:
    cfg = RunConfig()
    if config_path:
        cfg.load_file(config_path)
    cfg.apply_overrides(overrides or [])
    return cfg
