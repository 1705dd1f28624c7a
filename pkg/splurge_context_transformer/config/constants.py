"""
Configuration constants for splurge-context-transformer.

Toy defaults sized for a CPU run, next to the settings the method was
originally run with at full scale.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

from typing import Any

# Module domains
DOMAINS = ["config", "constants"]

__all__ = [
    "ENV_PREFIX",
    "DEFAULT_SEED",
    "DEFAULT_OUT_DIR",
    "DEFAULT_LOG_LEVEL",
    "DEFAULT_PRECISION",
    "DEFAULT_IMAGE_SIZE",
    "DEFAULT_GRIDS",
    "DEFAULT_ASPECT_RATIOS",
    "DEFAULT_BASE_SIZES",
    "DEFAULT_SOURCE_SCENES",
    "DEFAULT_SOURCE_TEST_SCENES",
    "DEFAULT_POOLING_KERNELS",
    "DEFAULT_SHOTS",
    "DEFAULT_SHOT_SWEEP",
    "DEFAULT_TRIALS",
    "DEFAULT_VARIANT",
    "DEFAULT_PRETRAIN",
    "DEFAULT_FINETUNE",
    "DEFAULT_LOG_EVERY",
    "FULL_SCALE_DEFAULTS",
    "VALID_PRECISIONS",
    "VALID_LOG_LEVELS",
    "VALID_COMMANDS",
    "CONFIG_FILE_NAME",
]

ENV_PREFIX: str = "SPLURGE_CT_"
CONFIG_FILE_NAME: str = "config.json"

# Run settings
DEFAULT_SEED: int = 0
DEFAULT_OUT_DIR: str = "runs"
DEFAULT_LOG_LEVEL: str = "INFO"
DEFAULT_PRECISION: str = "single"
DEFAULT_LOG_EVERY: int = 50

# Benchmark and priors
DEFAULT_IMAGE_SIZE: int = 64
DEFAULT_GRIDS: tuple[tuple[int, int], ...] = ((8, 8), (4, 4), (2, 2))
DEFAULT_ASPECT_RATIOS: tuple[float, ...] = (1.0, 2.0, 0.5)
DEFAULT_BASE_SIZES: tuple[float, ...] = (0.2, 0.45, 0.8)
DEFAULT_SOURCE_SCENES: int = 600
DEFAULT_SOURCE_TEST_SCENES: int = 200

# Contextual-field pooling kernel per scale (stride = kernel); 0 means pass-through
DEFAULT_POOLING_KERNELS: tuple[int, ...] = (2, 2, 0)

# Episodes
DEFAULT_SHOTS: int = 5
DEFAULT_SHOT_SWEEP: tuple[int, ...] = (1, 2, 3, 5, 10)
DEFAULT_TRIALS: int = 10
DEFAULT_VARIANT: str = "full"

# Optimizer stages
DEFAULT_PRETRAIN: dict[str, Any] = {
    "steps": 2000,
    "learning_rate": 1e-2,
    "milestones": [1500, 1800],
    "decay": 0.1,
    "momentum": 0.9,
    "weight_decay": 5e-4,
    "batch_size": 16,
}
DEFAULT_FINETUNE: dict[str, Any] = {
    "steps": 400,
    "learning_rate": 4e-3,
    "milestones": [300, 350],
    "decay": 0.1,
    "momentum": 0.9,
    "weight_decay": 5e-4,
    "batch_size": 16,
}

# Full-scale settings, used for reference counts only
FULL_SCALE_DEFAULTS: dict[str, Any] = {
    "batch_size": 64,
    "learning_rate": 4e-3,
    "momentum": 0.9,
    "weight_decay": 5e-4,
    "milestones": [3000, 3500],
    "iterations": 4000,
    "image_size": 300,
    "grids": [[38, 38], [19, 19], [10, 10], [5, 5], [3, 3], [1, 1]],
    "ratios_per_scale": [6, 6, 6, 6, 6, 6],
    "pooling_kernels": [3, 2, 2, 2, 0, 0],
    "source_classes": 60,
    "target_classes": 20,
}

VALID_PRECISIONS: tuple[str, ...] = ("single", "double")
VALID_LOG_LEVELS: tuple[str, ...] = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
VALID_COMMANDS: tuple[str, ...] = ("pretrain", "finetune", "eval", "incremental", "gradcheck", "ablate", "gen-data")
