"""
splurge-context-transformer package.

Few-shot object detection by transferring a pretrained SSD-style source
detector to new target classes with a Context-Transformer, on a numpy
autodiff core and a procedurally generated benchmark.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from .config import ExperimentConfig, load_config
from .context_transformer import ContextTransformerFlags, count_extra_params
from .detector import TABLE_ROWS, VARIANTS, Detector, Variant, fine_tune, pretrain_source
from .evaluation import EvalReport, evaluate_model
from .exceptions import (
    SplurgeContextTransformerCheckpointError,
    SplurgeContextTransformerConfigurationError,
    SplurgeContextTransformerConfigValidationError,
    SplurgeContextTransformerError,
    SplurgeContextTransformerFileError,
    SplurgeContextTransformerNumericalError,
    SplurgeContextTransformerOSError,
    SplurgeContextTransformerParameterError,
    SplurgeContextTransformerRuntimeError,
    SplurgeContextTransformerTypeError,
    SplurgeContextTransformerValueError,
)
from .incremental import IncrementalModel
from .logging import (
    ContextualLogger,
    clear_run_id,
    configure_module_logging,
    generate_run_id,
    get_contextual_logger,
    get_logger,
    get_logging_config,
    get_run_id,
    is_logging_configured,
    log_context,
    run_context,
    set_run_id,
    setup_logging,
)
from .main import run_ablate, run_eval, run_finetune, run_gen_data, run_gradcheck, run_incremental, run_pretrain
from .utils import FileIoAdapter

__version__ = "2025.10.0"

# Package domains
__domains__ = [
    "anchors",
    "api",
    "cli",
    "config",
    "context_transformer",
    "detector",
    "evaluation",
    "exceptions",
    "incremental",
    "io",
    "logging",
    "models",
    "numerics",
    "synthdata",
    "utils",
]

__all__ = [
    # Configuration
    "load_config",
    "ExperimentConfig",
    # Models
    "Detector",
    "Variant",
    "VARIANTS",
    "TABLE_ROWS",
    "ContextTransformerFlags",
    "IncrementalModel",
    "count_extra_params",
    "pretrain_source",
    "fine_tune",
    # Evaluation
    "EvalReport",
    "evaluate_model",
    # Commands
    "run_pretrain",
    "run_finetune",
    "run_eval",
    "run_incremental",
    "run_gradcheck",
    "run_ablate",
    "run_gen_data",
    # File I/O
    "FileIoAdapter",
    # Errors
    "SplurgeContextTransformerError",
    "SplurgeContextTransformerOSError",
    "SplurgeContextTransformerRuntimeError",
    "SplurgeContextTransformerValueError",
    "SplurgeContextTransformerTypeError",
    "SplurgeContextTransformerParameterError",
    "SplurgeContextTransformerNumericalError",
    "SplurgeContextTransformerConfigurationError",
    "SplurgeContextTransformerConfigValidationError",
    "SplurgeContextTransformerFileError",
    "SplurgeContextTransformerCheckpointError",
    # Logging
    "setup_logging",
    "get_logger",
    "configure_module_logging",
    "get_logging_config",
    "is_logging_configured",
    "generate_run_id",
    "set_run_id",
    "get_run_id",
    "clear_run_id",
    "run_context",
    "ContextualLogger",
    "get_contextual_logger",
    "log_context",
    # Version
    "__version__",
]
