"""
End-to-end tests for splurge-context-transformer.

These tests drive complete workflows, from the command line and the public
API down to checkpoints and evaluation reports on disk.
"""
