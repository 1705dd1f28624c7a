"""
Consolidated error classes for splurge-context-transformer.

Provides a unified error hierarchy for all framework errors. Every error
carries a hierarchical domain, an optional normalized error code, a
human-readable message and a details dictionary for diagnostics.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

import re
from typing import Any

# Module domains
DOMAINS = ["exceptions", "errors", "validation"]

__all__ = [
    "SplurgeFrameworkError",
    "SplurgeContextTransformerError",
    "SplurgeContextTransformerOSError",
    "SplurgeContextTransformerRuntimeError",
    "SplurgeContextTransformerValueError",
    "SplurgeContextTransformerTypeError",
    "SplurgeContextTransformerDimensionError",
    "SplurgeContextTransformerParameterError",
    "SplurgeContextTransformerDeterminismError",
    "SplurgeContextTransformerInputError",
    "SplurgeContextTransformerPlacementError",
    "SplurgeContextTransformerConsistencyError",
    "SplurgeContextTransformerNumericalError",
    "SplurgeContextTransformerConfigurationError",
    "SplurgeContextTransformerConfigValidationError",
    "SplurgeContextTransformerFileError",
    "SplurgeContextTransformerCheckpointError",
]

_DOMAIN_COMPONENT = re.compile(r"^[a-z][a-z0-9\-]*[a-z0-9]$")


def _normalize_error_code(code: str | None) -> str | None:
    """Lowercase the code and collapse any run of non-alphanumerics into one dash."""
    if code is None:
        return None
    code = re.sub(r"[_\s\W]+", "-", code.lower())
    code = re.sub(r"-+", "-", code).strip("-")
    return code or None


class SplurgeFrameworkError(Exception):
    """Structured base error.

    Subclasses declare a class-level ``_domain`` such as ``"numerics.dimension"``.
    The optional ``error_code`` is appended to the domain to form ``full_code``
    unless the domain already ends with it.

    Args:
        message: Human-readable error message.
        error_code: Optional semantic error identifier (normalized).
        details: Optional dictionary of diagnostic details.
    """

    _domain: str = "splurge"

    def __init__(
        self,
        message: str,
        error_code: str | None = None,
        details: dict[str, Any] | None = None,
    ) -> None:
        for component in self._domain.split("."):
            if not _DOMAIN_COMPONENT.match(component):
                raise TypeError(f"Invalid _domain '{self._domain}' on {type(self).__name__}")
        self._error_code = _normalize_error_code(error_code)
        self._message = message
        self._details: dict[str, Any] = dict(details or {})
        super().__init__(self.get_full_message())

    @property
    def full_code(self) -> str:
        """Domain plus error code, without duplicating a trailing component."""
        if self._error_code and not self._domain.endswith(self._error_code):
            return f"{self._domain}.{self._error_code}"
        return self._domain

    @property
    def error_code(self) -> str | None:
        return self._error_code

    @property
    def domain(self) -> str:
        return self._domain

    @property
    def message(self) -> str:
        return self._message

    @property
    def details(self) -> dict[str, Any]:
        return self._details.copy()

    def get_full_message(self) -> str:
        """Render ``[full.code] message (k=v, ...)``."""
        parts = [f"[{self.full_code}]"]
        if self._message:
            parts.append(self._message)
        if self._details:
            parts.append("(" + ", ".join(f"{k}={v!r}" for k, v in self._details.items()) + ")")
        return " ".join(parts)

    def __str__(self) -> str:
        return self.get_full_message()

    def __repr__(self) -> str:
        args = [f"message={self._message!r}"]
        if self._error_code:
            args.append(f"error_code={self._error_code!r}")
        if self._details:
            args.append(f"details={self._details!r}")
        return f"{type(self).__name__}({', '.join(args)})"

    def __reduce__(self):  # type: ignore[no-untyped-def]
        return (type(self), (self._message, self._error_code, self._details))


class SplurgeContextTransformerError(SplurgeFrameworkError):
    """Base exception for all splurge-context-transformer errors."""

    _domain: str = "splurge-context-transformer"


class SplurgeContextTransformerOSError(SplurgeContextTransformerError):
    """Exception raised when an OS-level error occurs."""

    _domain: str = "splurge-context-transformer.os"


class SplurgeContextTransformerRuntimeError(SplurgeContextTransformerError):
    """Exception raised when a runtime error occurs."""

    _domain: str = "splurge-context-transformer.runtime"


class SplurgeContextTransformerValueError(SplurgeContextTransformerError):
    """Exception raised when a value error occurs."""

    _domain: str = "splurge-context-transformer.value"


class SplurgeContextTransformerTypeError(SplurgeContextTransformerError):
    """Exception raised when a type error occurs."""

    _domain: str = "splurge-context-transformer.type"


# Numerical errors
class SplurgeContextTransformerDimensionError(SplurgeContextTransformerValueError):
    """Exception raised when tensor shapes are incompatible."""

    _domain: str = "splurge-context-transformer.numerics.dimension"


class SplurgeContextTransformerParameterError(SplurgeContextTransformerValueError):
    """Exception raised when an operation parameter is out of range."""

    _domain: str = "splurge-context-transformer.parameter"


class SplurgeContextTransformerDeterminismError(SplurgeContextTransformerRuntimeError):
    """Exception raised when a loss function is not deterministic."""

    _domain: str = "splurge-context-transformer.numerics.determinism"


class SplurgeContextTransformerNumericalError(SplurgeContextTransformerRuntimeError):
    """Exception raised when training produces NaN/Inf or diverges."""

    _domain: str = "splurge-context-transformer.numerical"


# Data errors
class SplurgeContextTransformerInputError(SplurgeContextTransformerValueError):
    """Exception raised when boxes or annotations are degenerate."""

    _domain: str = "splurge-context-transformer.input"


class SplurgeContextTransformerPlacementError(SplurgeContextTransformerRuntimeError):
    """Exception raised when a synthetic scene cannot be laid out."""

    _domain: str = "splurge-context-transformer.synthdata.placement"


class SplurgeContextTransformerConsistencyError(SplurgeContextTransformerRuntimeError):
    """Exception raised when head outputs disagree with prior-box provenance."""

    _domain: str = "splurge-context-transformer.detector.consistency"


# Configuration errors
class SplurgeContextTransformerConfigurationError(SplurgeContextTransformerError):
    """Exception raised when configuration is invalid."""

    _domain: str = "splurge-context-transformer.configuration"


class SplurgeContextTransformerConfigValidationError(SplurgeContextTransformerConfigurationError):
    """Exception raised when configuration validation fails."""

    _domain: str = "splurge-context-transformer.configuration.validation"


class SplurgeContextTransformerFileError(SplurgeContextTransformerError):
    """Exception raised when file operations fail."""

    _domain: str = "splurge-context-transformer.operation.file"


class SplurgeContextTransformerCheckpointError(SplurgeContextTransformerFileError):
    """Exception raised when a checkpoint container is malformed."""

    _domain: str = "splurge-context-transformer.operation.file.checkpoint"
