"""
File I/O adapter for run artifacts with domain error translation.

Every artifact the framework writes (configs, checkpoints, metric logs,
reports, scene dumps) goes through this adapter so that OS-level failures
surface as SplurgeContextTransformerFileError with the offending path and
artifact kind attached.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

import os
from pathlib import Path

from ..exceptions import SplurgeContextTransformerFileError
from ..logging import configure_module_logging

# Module domains
DOMAINS = ["utils", "file", "io"]

__all__ = ["FileIoAdapter"]

logger = configure_module_logging("file_io_adapter")

# Context type labels for error messages
CONTEXT_MESSAGES = {
    "config": "configuration file",
    "checkpoint": "checkpoint",
    "metrics": "metrics log",
    "report": "report",
    "scene": "scene dump",
    "generic": "file",
}


def _translate(
    exc: Exception, action: str, file_path: str | Path, context_type: str
) -> SplurgeContextTransformerFileError:
    context_name = CONTEXT_MESSAGES.get(context_type, context_type)
    if isinstance(exc, FileNotFoundError):
        message = f"{context_name.capitalize()} not found: {file_path}"
    elif isinstance(exc, PermissionError):
        message = f"Permission denied {action} {context_name}: {file_path}"
    elif isinstance(exc, UnicodeError):
        message = f"Invalid encoding in {context_name}: {file_path}"
    else:
        message = f"OS error {action} {context_name}: {file_path}"
    logger.error(message)
    return SplurgeContextTransformerFileError(
        message,
        details={"file_path": str(file_path), "context_type": context_type},
    )


class FileIoAdapter:
    """Adapter for artifact I/O with domain error translation.

    Writes are atomic: content is written to a sibling temporary file and
    moved into place, so an interrupted run never leaves a truncated
    checkpoint or report behind.
    """

    @staticmethod
    def read_text(file_path: str | Path, encoding: str = "utf-8", context_type: str = "generic") -> str:
        """Read an entire text file.

        Raises:
            SplurgeContextTransformerFileError: If the file cannot be read
        """
        try:
            return Path(file_path).read_text(encoding=encoding)
        except (OSError, UnicodeError) as e:
            raise _translate(e, "reading", file_path, context_type) from e

    @staticmethod
    def read_bytes(file_path: str | Path, context_type: str = "generic") -> bytes:
        """Read an entire binary file.

        Raises:
            SplurgeContextTransformerFileError: If the file cannot be read
        """
        try:
            return Path(file_path).read_bytes()
        except OSError as e:
            raise _translate(e, "reading", file_path, context_type) from e

    @staticmethod
    def write_text(
        file_path: str | Path, content: str, encoding: str = "utf-8", context_type: str = "generic"
    ) -> Path:
        """Atomically write a text file, creating parent directories.

        Returns:
            The path written

        Raises:
            SplurgeContextTransformerFileError: If the file cannot be written
        """
        return FileIoAdapter.write_bytes(file_path, content.encode(encoding), context_type=context_type)

    @staticmethod
    def write_bytes(file_path: str | Path, payload: bytes, context_type: str = "generic") -> Path:
        """Atomically write a binary file, creating parent directories.

        Returns:
            The path written

        Raises:
            SplurgeContextTransformerFileError: If the file cannot be written
        """
        path = Path(file_path)
        tmp_path = path.with_name(f".{path.name}.{os.getpid()}.tmp")
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp_path.write_bytes(payload)
            os.replace(tmp_path, path)
            return path
        except OSError as e:
            tmp_path.unlink(missing_ok=True)
            raise _translate(e, "writing", file_path, context_type) from e

    @staticmethod
    def append_line(file_path: str | Path, line: str, encoding: str = "utf-8", context_type: str = "generic") -> None:
        """Append one line (newline added) to a text file such as a JSON-lines log.

        Raises:
            SplurgeContextTransformerFileError: If the file cannot be appended to
        """
        path = Path(file_path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("a", encoding=encoding, newline="\n") as fh:
                fh.write(line.rstrip("\n") + "\n")
        except OSError as e:
            raise _translate(e, "appending to", file_path, context_type) from e

    @staticmethod
    def require_file(file_path: str | Path, context_type: str = "generic") -> Path:
        """Return the resolved path if it is an existing file.

        Raises:
            SplurgeContextTransformerFileError: If the file does not exist
        """
        path = Path(file_path).expanduser()
        if not path.is_file():
            context_name = CONTEXT_MESSAGES.get(context_type, context_type)
            message = f"{context_name.capitalize()} not found: {path}"
            logger.error(message)
            raise SplurgeContextTransformerFileError(
                message, details={"file_path": str(path), "context_type": context_type}
            )
        return path.resolve()
