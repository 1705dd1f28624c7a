"""
Logging package for splurge-context-transformer.

Provides centralized logging with timed rotation, per-run identifiers and
performance timing, on top of Python's built-in logging module.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from .context import (
    ContextualLogger,
    clear_run_id,
    generate_run_id,
    get_contextual_logger,
    get_run_id,
    log_context,
    run_context,
    set_run_id,
)
from .core import (
    configure_module_logging,
    get_logger,
    get_logging_config,
    is_logging_configured,
    setup_logging,
)
from .performance import (
    PerformanceLogger,
    log_performance,
    performance_context,
)

# Package domains
__domains__ = ["logging", "core", "context", "performance"]

__all__ = [
    # Core logging
    "setup_logging",
    "get_logger",
    "configure_module_logging",
    "get_logging_config",
    "is_logging_configured",
    # Run context
    "generate_run_id",
    "set_run_id",
    "get_run_id",
    "clear_run_id",
    "run_context",
    "ContextualLogger",
    "get_contextual_logger",
    "log_context",
    # Performance monitoring
    "PerformanceLogger",
    "log_performance",
    "performance_context",
]
