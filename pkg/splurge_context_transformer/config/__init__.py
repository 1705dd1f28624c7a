"""
Configuration management package for splurge-context-transformer.

Dictionary-based layering (defaults, TOML/JSON file, environment, CLI
overrides) plus a typed ``ExperimentConfig`` view of the result.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from .config import (
    get_default_config,
    get_env_config,
    load_config,
    load_config_file,
    merge_config,
    save_config,
    validate_config,
)
from .constants import (
    CONFIG_FILE_NAME,
    DEFAULT_LOG_LEVEL,
    DEFAULT_OUT_DIR,
    DEFAULT_PRECISION,
    DEFAULT_SEED,
    ENV_PREFIX,
    FULL_SCALE_DEFAULTS,
    VALID_COMMANDS,
    VALID_PRECISIONS,
)
from .experiment import (
    BenchmarkConfig,
    EpisodeConfig,
    EvaluationConfig,
    ExperimentConfig,
    OptimizerConfig,
    RunConfig,
    VariantFlags,
)

# Package domains
__domains__ = ["config", "constants", "experiment"]

__all__ = [
    # Configuration functions
    "load_config",
    "load_config_file",
    "get_default_config",
    "get_env_config",
    "merge_config",
    "validate_config",
    "save_config",
    # Typed view
    "ExperimentConfig",
    "RunConfig",
    "BenchmarkConfig",
    "EpisodeConfig",
    "OptimizerConfig",
    "VariantFlags",
    "EvaluationConfig",
    # Constants
    "CONFIG_FILE_NAME",
    "ENV_PREFIX",
    "DEFAULT_SEED",
    "DEFAULT_OUT_DIR",
    "DEFAULT_LOG_LEVEL",
    "DEFAULT_PRECISION",
    "FULL_SCALE_DEFAULTS",
    "VALID_COMMANDS",
    "VALID_PRECISIONS",
]
