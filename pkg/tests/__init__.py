"""
Test package for splurge-context-transformer.

Unit, integration and end-to-end tests share the fixtures in conftest.
"""

__version__ = "1.0.0"
