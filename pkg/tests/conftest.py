"""
Pytest configuration and shared fixtures for splurge-context-transformer tests.

This module provides common test fixtures and configuration for all test modules.
"""

import json
import logging
import os
import tempfile
from collections.abc import Callable, Generator
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from splurge_context_transformer.config import ENV_PREFIX, ExperimentConfig
from splurge_context_transformer.synthdata import Benchmark, default_benchmark

# Environment switch for the long directional runs
ACCEPTANCE_ENV = "SPLURGE_CT_RUN_ACCEPTANCE"


def tiny_config_data(out_dir: Path | str, **sections: Any) -> dict[str, Any]:
    """Configuration small enough for a full pretrain/finetune/eval cycle in seconds."""
    data: dict[str, Any] = {
        "seed": 7,
        "out_dir": str(out_dir),
        "precision": "double",
        "log_level": "WARNING",
        "log_every": 0,
        "benchmark": {"source_scenes": 8, "source_test_scenes": 4, "test_scenes": 6},
        "episode": {"shots": 1, "trial": 1, "trials": 2, "shot_sweep": [1, 2]},
        "pretrain": {"steps": 2, "batch_size": 2, "milestones": []},
        "finetune": {"steps": 2, "batch_size": 2, "milestones": []},
    }
    for key, value in sections.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return data


@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """Provide a temporary directory for test files."""
    with tempfile.TemporaryDirectory() as temp_dir:
        yield Path(temp_dir)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded numpy generator for randomized unit tests."""
    return np.random.default_rng(20251016)


@pytest.fixture(scope="session")
def benchmark() -> Benchmark:
    """The default synthetic benchmark."""
    return default_benchmark()


@pytest.fixture
def tiny_config(temp_dir: Path) -> ExperimentConfig:
    """Validated tiny configuration writing under a temporary directory."""
    return ExperimentConfig.from_dict(tiny_config_data(temp_dir / "run"))


@pytest.fixture
def tiny_config_factory(temp_dir: Path) -> Callable[..., ExperimentConfig]:
    """Factory for tiny configurations with section overrides."""

    def _create(name: str = "run", **sections: Any) -> ExperimentConfig:
        return ExperimentConfig.from_dict(tiny_config_data(temp_dir / name, **sections))

    return _create


@pytest.fixture
def temp_config_file_factory(tmp_path: Path) -> Callable[..., Path]:
    """Factory fixture for creating temporary config files."""

    def _create_config_file(config_data: dict[str, Any] | str, filename: str = "config.json") -> Path:
        config_file = tmp_path / filename
        text = config_data if isinstance(config_data, str) else json.dumps(config_data, indent=2)
        config_file.write_text(text, encoding="utf-8")
        return config_file

    return _create_config_file


@pytest.fixture(scope="session")
def tiny_source_checkpoint(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """A source checkpoint pretrained for two steps, shared by the whole session."""
    from splurge_context_transformer.main import run_pretrain

    out = tmp_path_factory.mktemp("tiny_source")
    result = run_pretrain(ExperimentConfig.from_dict(tiny_config_data(out / "pretrain")))
    assert result.checkpoint is not None
    return result.checkpoint


@pytest.fixture(autouse=True)
def reset_logging():
    """Reset logging configuration before each test."""
    package_logger = logging.getLogger("splurge_context_transformer")
    root_logger = logging.getLogger()
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    logging.basicConfig(level=logging.WARNING)

    yield

    for logger in (root_logger, package_logger):
        for handler in logger.handlers[:]:
            handler.close()
            logger.removeHandler(handler)


@pytest.fixture(autouse=True)
def reset_environment():
    """Reset environment variables before each test and drop any SPLURGE_CT_* settings."""
    original_env = os.environ.copy()
    for key in list(os.environ):
        if key.startswith(ENV_PREFIX) and key != ACCEPTANCE_ENV:
            del os.environ[key]

    yield

    os.environ.clear()
    os.environ.update(original_env)
