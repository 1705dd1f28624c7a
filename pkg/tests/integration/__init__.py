"""
Integration tests for splurge-context-transformer.

These tests run the experiment entry points on the tiny configuration and
check how pretraining, fine-tuning and evaluation fit together.
"""
