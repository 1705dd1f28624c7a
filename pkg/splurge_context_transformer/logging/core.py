"""
Core logging functionality for splurge-context-transformer.

Provides main logging setup and configuration functions. Training runs log
human summaries here; per-step metrics go to the run's JSON-lines file.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

import logging
import logging.handlers
import sys
from pathlib import Path
from typing import Any

from ..exceptions import SplurgeContextTransformerOSError, SplurgeContextTransformerValueError

# Module domains
DOMAINS = ["logging", "core", "configuration"]

__all__ = ["setup_logging", "get_logger", "configure_module_logging", "get_logging_config", "is_logging_configured"]

ROOT_LOGGER_NAME = "splurge_context_transformer"


class _TimedRotatingFileHandlerSafe(logging.handlers.TimedRotatingFileHandler):
    """TimedRotatingFileHandler that tolerates locked files during rollover."""

    def doRollover(self) -> None:
        try:
            super().doRollover()
        except PermissionError:
            # Retried at the next rollover time.
            pass


_LOGGING_CONFIGURED = False
_LOGGING_CONFIG: dict[str, Any] = {}

_DEFAULT_LOG_LEVEL: str = "INFO"
_DEFAULT_BACKUP_COUNT: int = 7
_DEFAULT_LOG_FILENAME: str = "splurge_context_transformer.log"
_DEFAULT_LOG_SUBDIR: str = ".splurge_context_transformer"
_DEFAULT_LOG_DIR: str = "logs"
_VALID_LOG_LEVELS: set[str] = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}


def setup_logging(
    *,
    log_level: str = "INFO",
    log_file: str | None = None,
    log_dir: str | None = None,
    enable_console: bool = True,
    enable_file: bool = True,
    backup_count: int = _DEFAULT_BACKUP_COUNT,
) -> logging.Logger:
    """
    Set up logging with a timed-rotating file handler and a console handler.

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Specific log file path (optional)
        log_dir: Directory for log files, typically ``<out>/logs`` (optional)
        enable_console: Whether to enable console logging
        enable_file: Whether to attach the rotating file handler
        backup_count: Number of rotated files to keep

    Returns:
        Configured package root logger

    Raises:
        SplurgeContextTransformerValueError: If log_level is invalid
        SplurgeContextTransformerOSError: If the log directory cannot be created
    """
    global _LOGGING_CONFIGURED, _LOGGING_CONFIG

    if log_level.upper() not in _VALID_LOG_LEVELS:
        raise SplurgeContextTransformerValueError(
            f"Invalid log level: {log_level}. Must be one of {sorted(_VALID_LOG_LEVELS)}"
        )

    _LOGGING_CONFIG = {
        "log_level": log_level,
        "log_file": log_file,
        "log_dir": log_dir,
        "enable_console": enable_console,
        "enable_file": enable_file,
        "backup_count": backup_count,
    }

    level = getattr(logging, log_level.upper())
    logger = logging.getLogger(ROOT_LOGGER_NAME)
    logger.setLevel(level)
    for handler in list(logger.handlers):
        handler.close()
    logger.handlers.clear()

    if enable_file:
        try:
            if log_file:
                log_path = Path(log_file)
                log_path.parent.mkdir(parents=True, exist_ok=True)
            else:
                log_dir_path = Path(log_dir) if log_dir else Path.home() / _DEFAULT_LOG_SUBDIR / _DEFAULT_LOG_DIR
                log_dir_path.mkdir(parents=True, exist_ok=True)
                log_path = log_dir_path / _DEFAULT_LOG_FILENAME
        except Exception as e:
            raise SplurgeContextTransformerOSError(f"OS error creating log file path: {e}") from e

        file_handler = _TimedRotatingFileHandlerSafe(
            filename=str(log_path),
            when="midnight",
            interval=1,
            backupCount=backup_count,
            encoding="utf-8",
        )
        file_handler.setLevel(level)
        file_handler.setFormatter(
            logging.Formatter(
                fmt="%(asctime)s - %(name)s - %(levelname)s - %(module)s:%(funcName)s:%(lineno)d - %(message)s",
                datefmt="%Y-%m-%d %H:%M:%S",
            )
        )
        logger.addHandler(file_handler)

    if enable_console:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(level)
        console_handler.setFormatter(
            logging.Formatter(fmt="%(asctime)s - %(name)s - %(levelname)s - %(message)s", datefmt="%H:%M:%S")
        )
        logger.addHandler(console_handler)

    logger.propagate = False
    _LOGGING_CONFIGURED = True
    return logger


def get_logger(name: str | None = None) -> logging.Logger:
    """
    Get a logger instance for the specified name.

    Args:
        name: Logger name (optional, defaults to the package root logger)

    Returns:
        Logger instance
    """
    return logging.getLogger(name or ROOT_LOGGER_NAME)


def configure_module_logging(
    module_name: str,
    *,
    log_level: str | None = None,
) -> logging.Logger:
    """
    Return the logger for one module of the package.

    Module loggers are children of the package root logger. Until
    :func:`setup_logging` runs they inherit a console-free, file-free root
    so that library use stays silent; a NullHandler keeps Python from
    printing "no handlers" warnings.

    Args:
        module_name: Name of the module
        log_level: Logging level override for this module (optional)

    Returns:
        Configured logger for the module
    """
    root = logging.getLogger(ROOT_LOGGER_NAME)
    if not root.handlers:
        root.addHandler(logging.NullHandler())
    logger = get_logger(f"{ROOT_LOGGER_NAME}.{module_name}")
    if log_level:
        logger.setLevel(getattr(logging, log_level.upper(), logging.INFO))
    return logger


def get_logging_config() -> dict[str, Any]:
    """
    Get the current logging configuration.

    Returns:
        Dictionary containing current logging configuration
    """
    return _LOGGING_CONFIG.copy()


def is_logging_configured() -> bool:
    """
    Check if logging has been configured.

    Returns:
        True if logging is configured, False otherwise
    """
    return _LOGGING_CONFIGURED
