"""
Logging context module.

Provides run identifiers and contextual loggers. Ablation sweeps fan runs
out over worker threads, so run identifiers live in thread-local storage
and every record written by a worker can be traced back to its run.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

import logging
import threading
import uuid
from collections.abc import Generator
from contextlib import contextmanager
from typing import Any

from .core import ROOT_LOGGER_NAME, get_logger

# Module domains
DOMAINS = ["logging", "context", "correlation"]

__all__ = [
    "generate_run_id",
    "set_run_id",
    "get_run_id",
    "clear_run_id",
    "run_context",
    "ContextualLogger",
    "log_context",
    "get_contextual_logger",
]

_thread_local = threading.local()

_contextual_logger_cache: dict[str, "ContextualLogger"] = {}
_cache_lock = threading.Lock()


def generate_run_id() -> str:
    """
    Generate a new run identifier.

    Returns:
        Short hexadecimal run id
    """
    return uuid.uuid4().hex[:12]


def set_run_id(run_id: str | None = None) -> str:
    """
    Set the run id for the current thread.

    Args:
        run_id: Run id to set (generates a new one if None)

    Returns:
        The run id that was set
    """
    if run_id is None:
        run_id = generate_run_id()
    _thread_local.run_id = run_id
    return run_id


def get_run_id() -> str | None:
    """Get the run id of the current thread, or None."""
    return getattr(_thread_local, "run_id", None)


def clear_run_id() -> None:
    """Clear the run id for the current thread."""
    if hasattr(_thread_local, "run_id"):
        delattr(_thread_local, "run_id")


@contextmanager
def run_context(run_id: str | None = None) -> Generator[str, None, None]:
    """
    Context manager scoping a run id to a block.

    Args:
        run_id: Run id to use (generates a new one if None)

    Yields:
        The run id being used
    """
    previous_id = get_run_id()
    current_id = set_run_id(run_id)
    try:
        yield current_id
    finally:
        if previous_id is None:
            clear_run_id()
        else:
            set_run_id(previous_id)


class ContextualLogger:
    """
    Logger that appends bound key/value context and the thread's run id.
    """

    def __init__(self, logger: logging.Logger, custom_name: str | None = None) -> None:
        self._logger = logger
        self._custom_name = custom_name
        self._context: dict[str, Any] = {}

    @property
    def name(self) -> str:
        return self._custom_name if self._custom_name is not None else self._logger.name

    def bind(self, **kwargs: Any) -> "ContextualLogger":
        """
        Return a new logger with extra context bound.

        Args:
            **kwargs: Contextual key-value pairs

        Returns:
            New ContextualLogger sharing the base logger
        """
        bound = ContextualLogger(self._logger, self._custom_name)
        bound._context = {**self._context, **kwargs}
        return bound

    def _format(self, message: str) -> str:
        context = dict(self._context)
        run_id = get_run_id()
        if run_id is not None:
            context.setdefault("run", run_id)
        if not context:
            return message
        return f"{message} | " + " | ".join(f"{k}={v}" for k, v in context.items())

    def debug(self, message: str, *args: Any, **kwargs: Any) -> None:
        self._logger.debug(self._format(message), *args, **kwargs)

    def info(self, message: str, *args: Any, **kwargs: Any) -> None:
        self._logger.info(self._format(message), *args, **kwargs)

    def warning(self, message: str, *args: Any, **kwargs: Any) -> None:
        self._logger.warning(self._format(message), *args, **kwargs)

    def error(self, message: str, *args: Any, **kwargs: Any) -> None:
        self._logger.error(self._format(message), *args, **kwargs)

    def exception(self, message: str, *args: Any, **kwargs: Any) -> None:
        self._logger.exception(self._format(message), *args, **kwargs)


@contextmanager
def log_context(name: str | None = None, **context: Any) -> Generator[ContextualLogger, None, None]:
    """
    Yield a contextual logger with ``context`` bound for the duration of a block.

    Args:
        name: Module logger name (optional)
        **context: Contextual key-value pairs
    """
    yield get_contextual_logger(name).bind(**context)


def get_contextual_logger(name: str | None = None) -> ContextualLogger:
    """
    Get a cached contextual logger.

    Args:
        name: Module logger name (optional)

    Returns:
        ContextualLogger instance
    """
    key = name or ROOT_LOGGER_NAME
    with _cache_lock:
        if key not in _contextual_logger_cache:
            full_name = key if key.startswith(ROOT_LOGGER_NAME) else f"{ROOT_LOGGER_NAME}.{key}"
            _contextual_logger_cache[key] = ContextualLogger(get_logger(full_name), custom_name=key)
        return _contextual_logger_cache[key]
