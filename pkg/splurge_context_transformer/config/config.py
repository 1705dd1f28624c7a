"""
Dictionary-based configuration for splurge-context-transformer.

Layers, lowest to highest priority: built-in defaults, a TOML (or JSON)
file, ``SPLURGE_CT_*`` environment variables, then explicit overrides
from the command line. The merged dictionary is validated once and every
problem is reported together.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

import copy
import json
import os
import sys
from collections.abc import Mapping
from pathlib import Path
from typing import Any

from ..config.constants import (
    DEFAULT_ASPECT_RATIOS,
    DEFAULT_BASE_SIZES,
    DEFAULT_FINETUNE,
    DEFAULT_GRIDS,
    DEFAULT_IMAGE_SIZE,
    DEFAULT_LOG_EVERY,
    DEFAULT_LOG_LEVEL,
    DEFAULT_OUT_DIR,
    DEFAULT_POOLING_KERNELS,
    DEFAULT_PRECISION,
    DEFAULT_PRETRAIN,
    DEFAULT_SEED,
    DEFAULT_SHOT_SWEEP,
    DEFAULT_SHOTS,
    DEFAULT_SOURCE_SCENES,
    DEFAULT_SOURCE_TEST_SCENES,
    DEFAULT_TRIALS,
    DEFAULT_VARIANT,
    ENV_PREFIX,
    VALID_LOG_LEVELS,
    VALID_PRECISIONS,
)
from ..context_transformer import EMBEDDINGS, METRICS, MODES, POOL_KINDS, THETA_SHARING
from ..detector import VARIANTS
from ..exceptions import SplurgeContextTransformerConfigValidationError, SplurgeContextTransformerFileError
from ..logging import configure_module_logging
from ..synthdata import DEFAULT_TEST_SEED, TEST_SCENES_PER_FAMILY
from ..utils.file_io_adapter import FileIoAdapter

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

# Module domains
DOMAINS = ["config", "configuration"]

__all__ = [
    "load_config",
    "load_config_file",
    "save_config",
    "get_default_config",
    "get_env_config",
    "merge_config",
    "validate_config",
]

logger = configure_module_logging("config")

_INTERPOLATIONS = ("all-point", "11-point")


def get_default_config() -> dict[str, Any]:
    """Default configuration for the synthetic benchmark.

    Variant flag fields left as ``None`` take the named variant's own value.
    """
    return {
        "seed": DEFAULT_SEED,
        "out_dir": DEFAULT_OUT_DIR,
        "log_level": DEFAULT_LOG_LEVEL,
        "precision": DEFAULT_PRECISION,
        "workers": 1,
        "log_every": DEFAULT_LOG_EVERY,
        "flip": True,
        "benchmark": {
            "image_size": DEFAULT_IMAGE_SIZE,
            "grids": [list(g) for g in DEFAULT_GRIDS],
            "aspect_ratios": list(DEFAULT_ASPECT_RATIOS),
            "base_sizes": list(DEFAULT_BASE_SIZES),
            "source_scenes": DEFAULT_SOURCE_SCENES,
            "source_test_scenes": DEFAULT_SOURCE_TEST_SCENES,
            "test_scenes": TEST_SCENES_PER_FAMILY,
            "test_seed": DEFAULT_TEST_SEED,
        },
        "episode": {
            "shots": DEFAULT_SHOTS,
            "trial": 1,
            "trials": DEFAULT_TRIALS,
            "shot_sweep": list(DEFAULT_SHOT_SWEEP),
        },
        "variant": {
            "name": DEFAULT_VARIANT,
            "pool": None,
            "embedding": None,
            "metric": None,
            "theta": None,
            "mode": None,
            "pooling_kernels": list(DEFAULT_POOLING_KERNELS),
            "ceil_mode": True,
        },
        "pretrain": dict(DEFAULT_PRETRAIN, milestones=list(DEFAULT_PRETRAIN["milestones"])),
        "finetune": dict(DEFAULT_FINETUNE, milestones=list(DEFAULT_FINETUNE["milestones"])),
        "evaluation": {
            "interpolation": "all-point",
            "iou_threshold": 0.5,
            "score_floor": 0.3,
        },
    }


def merge_config(base: Mapping[str, Any], override: Mapping[str, Any]) -> dict[str, Any]:
    """Deep-merge ``override`` into a copy of ``base``; nested sections merge key by key."""
    merged = copy.deepcopy(dict(base))
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = merge_config(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def get_env_config() -> dict[str, Any]:
    """Read ``SPLURGE_CT_*`` environment variables.

    Supports SEED, SHOTS, TRIAL, OUT_DIR, PRECISION, LOG_LEVEL and VARIANT.
    Unparseable numbers are ignored.
    """
    config: dict[str, Any] = {}

    if seed := os.getenv(f"{ENV_PREFIX}SEED"):
        try:
            config["seed"] = int(seed, 0)
        except ValueError:
            logger.warning(f"Ignoring non-integer {ENV_PREFIX}SEED={seed!r}")

    episode: dict[str, Any] = {}
    for key in ("shots", "trial"):
        if raw := os.getenv(f"{ENV_PREFIX}{key.upper()}"):
            try:
                episode[key] = int(raw)
            except ValueError:
                logger.warning(f"Ignoring non-integer {ENV_PREFIX}{key.upper()}={raw!r}")
    if episode:
        config["episode"] = episode

    if out_dir := os.getenv(f"{ENV_PREFIX}OUT_DIR"):
        config["out_dir"] = out_dir

    if precision := os.getenv(f"{ENV_PREFIX}PRECISION"):
        config["precision"] = precision.lower()

    if log_level := os.getenv(f"{ENV_PREFIX}LOG_LEVEL"):
        config["log_level"] = log_level.upper()

    if variant := os.getenv(f"{ENV_PREFIX}VARIANT"):
        config["variant"] = {"name": variant}

    return config


def load_config_file(file_path: str | Path) -> dict[str, Any]:
    """Parse a TOML file, or JSON when the suffix is ``.json``.

    Raises:
        SplurgeContextTransformerFileError: If the file is missing, unreadable or malformed
    """
    path = FileIoAdapter.require_file(file_path, context_type="config")
    content = FileIoAdapter.read_text(path, context_type="config")
    try:
        data = json.loads(content) if path.suffix.lower() == ".json" else tomllib.loads(content)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise SplurgeContextTransformerFileError(
            f"Invalid configuration file {path}: {e}", details={"file_path": str(path)}
        ) from e
    if not isinstance(data, dict):
        raise SplurgeContextTransformerFileError(f"Configuration file {path} must hold a table at top level")
    return data


def load_config(
    config_file_path: str | Path | None = None,
    *,
    overrides: Mapping[str, Any] | None = None,
    command: str | None = None,
) -> dict[str, Any]:
    """Defaults, then the file, then the environment, then ``overrides``; validated.

    Raises:
        SplurgeContextTransformerFileError: If the configuration file cannot be read
        SplurgeContextTransformerConfigValidationError: Listing every invalid or conflicting setting
    """
    config = get_default_config()
    if config_file_path:
        config = merge_config(config, load_config_file(config_file_path))
    config = merge_config(config, get_env_config())
    if overrides:
        config = merge_config(config, overrides)
    validate_config(config, command=command)
    return config


def _unknown_keys(config: Mapping[str, Any], reference: Mapping[str, Any], prefix: str = "") -> list[str]:
    unknown = []
    for key, value in config.items():
        if key not in reference:
            unknown.append(f"{prefix}{key}")
        elif isinstance(reference[key], dict) and isinstance(value, Mapping):
            unknown.extend(_unknown_keys(value, reference[key], f"{prefix}{key}."))
    return unknown


def _positive_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value > 0


def _positive_number(value: Any) -> bool:
    return isinstance(value, int | float) and not isinstance(value, bool) and value > 0


def _positive_list(value: Any) -> bool:
    return isinstance(value, list) and bool(value) and all(_positive_number(v) for v in value)


def _validate_stage(name: str, stage: Mapping[str, Any], errors: list[str]) -> None:
    if not _positive_int(stage.get("steps")):
        errors.append(f"{name}.steps must be a positive integer")
    if not _positive_number(stage.get("learning_rate")):
        errors.append(f"{name}.learning_rate must be positive")
    momentum = stage.get("momentum")
    if not isinstance(momentum, int | float) or not 0.0 <= momentum < 1.0:
        errors.append(f"{name}.momentum must lie in [0, 1)")
    weight_decay = stage.get("weight_decay")
    if not isinstance(weight_decay, int | float) or weight_decay < 0:
        errors.append(f"{name}.weight_decay must be nonnegative")
    if not _positive_int(stage.get("batch_size")):
        errors.append(f"{name}.batch_size must be a positive integer")
    milestones = stage.get("milestones")
    if not isinstance(milestones, list) or not all(_positive_int(m) for m in milestones):
        errors.append(f"{name}.milestones must be a list of positive integers")


def _resolved_flag(variant: Mapping[str, Any], name: str) -> str | None:
    if variant.get(name) is not None:
        return str(variant[name])
    registered = VARIANTS.get(str(variant.get("name")))
    return getattr(registered.flags, name) if registered is not None else None


def validate_config(config: Mapping[str, Any], *, command: str | None = None) -> list[str]:
    """Check a merged configuration.

    Returns:
        Warnings for settings that are allowed but have no effect

    Raises:
        SplurgeContextTransformerConfigValidationError: Listing every problem found
    """
    errors: list[str] = [f"unknown setting '{key}'" for key in _unknown_keys(config, get_default_config())]
    warnings: list[str] = []

    if not isinstance(config.get("seed"), int) or config["seed"] < 0:
        errors.append("seed must be a nonnegative integer")
    if config.get("precision") not in VALID_PRECISIONS:
        errors.append(f"precision must be one of {list(VALID_PRECISIONS)}")
    if str(config.get("log_level", "")).upper() not in VALID_LOG_LEVELS:
        errors.append(f"log_level must be one of {list(VALID_LOG_LEVELS)}")
    if not _positive_int(config.get("workers")):
        errors.append("workers must be a positive integer")
    if not isinstance(config.get("log_every"), int) or config["log_every"] < 0:
        errors.append("log_every must be a nonnegative integer")
    if not isinstance(config.get("flip"), bool):
        errors.append("flip must be a boolean")

    benchmark = config.get("benchmark", {})
    grids = benchmark.get("grids")
    if not isinstance(grids, list) or not grids or not all(
        isinstance(g, list) and len(g) == 2 and all(_positive_int(v) for v in g) for g in grids
    ):
        errors.append("benchmark.grids must be a non-empty list of [rows, cols] pairs")
        grids = None
    if not _positive_list(benchmark.get("aspect_ratios")):
        errors.append("benchmark.aspect_ratios must be a non-empty list of positive numbers")
    base_sizes = benchmark.get("base_sizes")
    if not _positive_list(base_sizes):
        errors.append("benchmark.base_sizes must be a non-empty list of positive numbers")
    elif grids is not None and len(base_sizes) != len(grids):
        errors.append(f"benchmark.base_sizes lists {len(base_sizes)} sizes for {len(grids)} scales")
    for key in ("image_size", "source_scenes", "source_test_scenes", "test_scenes"):
        if not _positive_int(benchmark.get(key)):
            errors.append(f"benchmark.{key} must be a positive integer")

    episode = config.get("episode", {})
    if not isinstance(episode.get("shots"), int) or episode["shots"] < 1:
        errors.append("episode.shots must be at least 1")
    for key in ("trial", "trials"):
        if not _positive_int(episode.get(key)):
            errors.append(f"episode.{key} must be a positive integer")
    if not isinstance(episode.get("shot_sweep"), list) or not all(_positive_int(n) for n in episode["shot_sweep"]):
        errors.append("episode.shot_sweep must be a list of positive integers")

    variant = config.get("variant", {})
    if variant.get("name") not in VARIANTS:
        errors.append(f"unknown variant '{variant.get('name')}' (allowed: {sorted(VARIANTS)})")
    for name, allowed in (
        ("pool", POOL_KINDS),
        ("embedding", EMBEDDINGS),
        ("metric", METRICS),
        ("theta", THETA_SHARING),
        ("mode", MODES),
    ):
        value = variant.get(name)
        if value is not None and value not in allowed:
            errors.append(f"variant.{name} must be one of {list(allowed)}")
    kernels = variant.get("pooling_kernels")
    if not isinstance(kernels, list) or not all(isinstance(k, int) and k >= 0 for k in kernels):
        errors.append("variant.pooling_kernels must be a list of nonnegative integers (0 = pass-through)")
    elif grids is not None and len(kernels) != len(grids):
        errors.append(f"variant.pooling_kernels lists {len(kernels)} entries for {len(grids)} scales")
    if not isinstance(variant.get("ceil_mode"), bool):
        errors.append("variant.ceil_mode must be a boolean")

    mode = _resolved_flag(variant, "mode")
    if command == "pretrain" and mode == "unload-at-test":
        errors.append("mode 'unload-at-test' conflicts with pretraining")
    if command == "incremental" and _resolved_flag(variant, "theta") == "per-scale":
        errors.append("per-scale theta conflicts with incremental fine-tuning")
    if mode == "non-local" and isinstance(kernels, list) and any(kernels):
        warnings.append("non-local mode ignores variant.pooling_kernels")

    for stage in ("pretrain", "finetune"):
        _validate_stage(stage, config.get(stage, {}), errors)

    evaluation = config.get("evaluation", {})
    if evaluation.get("interpolation") not in _INTERPOLATIONS:
        errors.append(f"evaluation.interpolation must be one of {list(_INTERPOLATIONS)}")
    iou_threshold = evaluation.get("iou_threshold")
    if not isinstance(iou_threshold, int | float) or not 0.0 < iou_threshold <= 1.0:
        errors.append("evaluation.iou_threshold must lie in (0, 1]")
    score_floor = evaluation.get("score_floor")
    if not isinstance(score_floor, int | float) or not 0.0 <= score_floor < 1.0:
        errors.append("evaluation.score_floor must lie in [0, 1)")

    if errors:
        raise SplurgeContextTransformerConfigValidationError(
            f"Configuration validation failed: {'; '.join(errors)}",
            details={"errors": errors, "command": command},
        )
    for warning in warnings:
        logger.warning(warning)
    return warnings


def save_config(config: Mapping[str, Any], file_path: str | Path) -> Path:
    """Write the configuration as JSON.

    Raises:
        SplurgeContextTransformerFileError: If the file cannot be written
    """
    return FileIoAdapter.write_text(
        file_path, json.dumps(config, indent=2, sort_keys=True, ensure_ascii=False) + "\n", context_type="config"
    )
