"""
Performance logging for splurge-context-transformer.

Provides timing of pretraining, fine-tuning, evaluation and sweeps.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

import logging
import time
from collections.abc import Callable, Generator
from contextlib import contextmanager
from functools import wraps
from typing import Any, ParamSpec, TypeVar

from .context import get_run_id
from .core import get_logger

# Module domains
DOMAINS = ["logging", "performance", "monitoring"]

__all__ = ["PerformanceLogger", "log_performance", "performance_context"]

T = TypeVar("T")
P = ParamSpec("P")

# Training steps and full runs are long; only multi-minute phases warrant a warning.
_SLOW_SECONDS: float = 600.0
_NOTABLE_SECONDS: float = 1.0


class PerformanceLogger:
    """
    Logger for performance monitoring and timing.
    """

    def __init__(self, logger: logging.Logger) -> None:
        self._logger = logger
        self.last_duration: float | None = None

    def log_timing(self, operation: str, duration: float, **context: Any) -> None:
        """
        Log timing information for an operation.

        Args:
            operation: Name of the operation
            duration: Duration in seconds
            **context: Additional context information
        """
        self.last_duration = duration
        run_id = get_run_id()
        if run_id is not None:
            context.setdefault("run", run_id)
        message = f"Performance: {operation} took {duration:.3f}s"
        if context:
            message += " | " + " | ".join(f"{k}={v}" for k, v in context.items())

        if duration > _SLOW_SECONDS:
            self._logger.warning(message)
        elif duration > _NOTABLE_SECONDS:
            self._logger.info(message)
        else:
            self._logger.debug(message)


def log_performance(operation: str, **context: Any) -> Callable[[Callable[P, T]], Callable[P, T]]:
    """
    Decorator to log performance of function execution.

    Args:
        operation: Name of the operation
        **context: Additional context information

    Returns:
        Decorator function
    """

    def decorator(func: Callable[P, T]) -> Callable[P, T]:
        @wraps(func)
        def wrapper(*args: P.args, **kwargs: P.kwargs) -> T:
            perf_logger = PerformanceLogger(get_logger())
            start_time = time.perf_counter()
            try:
                return func(*args, **kwargs)
            finally:
                perf_logger.log_timing(operation, time.perf_counter() - start_time, **context)

        return wrapper

    return decorator


@contextmanager
def performance_context(operation: str, **context: Any) -> Generator[PerformanceLogger, None, None]:
    """
    Context manager for performance monitoring.

    Args:
        operation: Name of the operation
        **context: Additional context information

    Yields:
        PerformanceLogger instance
    """
    perf_logger = PerformanceLogger(get_logger())
    start_time = time.perf_counter()
    try:
        yield perf_logger
    finally:
        perf_logger.log_timing(operation, time.perf_counter() - start_time, **context)
