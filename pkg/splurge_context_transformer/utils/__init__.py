"""
Utilities package for splurge-context-transformer.

Contains shared helpers used by the framework and its test suites.
"""

from .file_io_adapter import FileIoAdapter

# Package domains
__domains__ = ["utils", "file", "io"]

__all__ = ["FileIoAdapter"]
