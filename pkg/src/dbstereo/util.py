"""Determinism helpers shared by training, inference and the CLI."""

from __future__ import annotations

import os
import random

import numpy as np
import torch

DETERMINISTIC_ENV_VAR = "DBS_DETERMINISTIC"


def deterministic_requested(flag: bool = False) -> bool:
    """True if deterministic mode is on, either via config or DBS_DETERMINISTIC=1."""
    return bool(flag) or os.environ.get(DETERMINISTIC_ENV_VAR, "") == "1"


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)


def enable_determinism(seed: int) -> None:
    """Seed all RNGs and pin torch to bit-reproducible execution.

    Single-threaded execution is forced because multi-threaded reductions
    are not bitwise stable across runs.
    """
    seed_everything(seed)
    torch.set_num_threads(1)
    torch.use_deterministic_algorithms(True)
