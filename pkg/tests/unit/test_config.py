"""
Unit tests for the config package.

Tests layering of defaults, files, environment and overrides, validation
of the merged dictionary, and the typed ExperimentConfig view.
"""

import json
import os
from pathlib import Path
from unittest.mock import patch

import pytest

from splurge_context_transformer.config import (
    ExperimentConfig,
    get_default_config,
    get_env_config,
    load_config,
    load_config_file,
    merge_config,
    save_config,
    validate_config,
)
from splurge_context_transformer.exceptions import (
    SplurgeContextTransformerConfigurationError,
    SplurgeContextTransformerConfigValidationError,
    SplurgeContextTransformerFileError,
)


@pytest.mark.unit
class TestDefaults:
    """Test the built-in defaults."""

    def test_defaults_validate(self):
        """Defaults pass validation without warnings."""
        assert validate_config(get_default_config()) == []

    def test_default_values(self):
        """Toy-scale defaults."""
        config = get_default_config()
        assert config["benchmark"]["grids"] == [[8, 8], [4, 4], [2, 2]]
        assert config["variant"]["name"] == "full"
        assert config["variant"]["pooling_kernels"] == [2, 2, 0]
        assert config["evaluation"]["interpolation"] == "all-point"

    def test_defaults_are_fresh_copies(self):
        """Mutating one default dict never leaks into the next."""
        first = get_default_config()
        first["pretrain"]["milestones"].append(1)
        assert get_default_config()["pretrain"]["milestones"] == [1500, 1800]


@pytest.mark.unit
class TestMergeConfig:
    """Test deep merging."""

    def test_nested_sections_merge_key_by_key(self):
        merged = merge_config(get_default_config(), {"episode": {"shots": 2}})
        assert merged["episode"]["shots"] == 2
        assert merged["episode"]["trials"] == 10

    def test_base_is_not_modified(self):
        base = {"a": {"b": 1}}
        merge_config(base, {"a": {"b": 2}})
        assert base == {"a": {"b": 1}}


@pytest.mark.unit
class TestGetEnvConfig:
    """Test environment variable configuration loading."""

    def test_empty_env_returns_empty_config(self):
        assert get_env_config() == {}

    def test_reads_known_variables(self):
        env = {
            "SPLURGE_CT_SEED": "0x10",
            "SPLURGE_CT_SHOTS": "3",
            "SPLURGE_CT_PRECISION": "DOUBLE",
            "SPLURGE_CT_LOG_LEVEL": "debug",
            "SPLURGE_CT_VARIANT": "baseline",
        }
        with patch.dict(os.environ, env):
            config = get_env_config()
        assert config["seed"] == 16
        assert config["episode"] == {"shots": 3}
        assert config["precision"] == "double"
        assert config["log_level"] == "DEBUG"
        assert config["variant"] == {"name": "baseline"}

    def test_invalid_numbers_ignored(self):
        with patch.dict(os.environ, {"SPLURGE_CT_SEED": "abc", "SPLURGE_CT_TRIAL": "x"}):
            assert get_env_config() == {}


@pytest.mark.unit
class TestLoadConfig:
    """Test the full layering."""

    def test_file_env_and_overrides_in_order(self, temp_config_file_factory):
        path = temp_config_file_factory({"seed": 1, "episode": {"shots": 2, "trial": 3}})
        with patch.dict(os.environ, {"SPLURGE_CT_SHOTS": "4"}):
            config = load_config(path, overrides={"episode": {"trial": 5}})
        assert config["seed"] == 1
        assert config["episode"]["shots"] == 4
        assert config["episode"]["trial"] == 5

    def test_toml_file(self, temp_config_file_factory):
        path = temp_config_file_factory('seed = 11\n[variant]\nname = "unload"\n', filename="config.toml")
        config = load_config(path)
        assert config["seed"] == 11
        assert config["variant"]["name"] == "unload"

    def test_missing_file(self, temp_dir: Path):
        with pytest.raises(SplurgeContextTransformerFileError):
            load_config_file(temp_dir / "nope.toml")

    def test_malformed_file(self, temp_config_file_factory):
        path = temp_config_file_factory("{broken", filename="config.json")
        with pytest.raises(SplurgeContextTransformerFileError):
            load_config_file(path)

    def test_save_then_load(self, temp_dir: Path):
        config = merge_config(get_default_config(), {"seed": 9})
        path = save_config(config, temp_dir / "saved.json")
        assert json.loads(path.read_text(encoding="utf-8"))["seed"] == 9
        assert load_config(path) == config


@pytest.mark.unit
class TestValidateConfig:
    """Test validation messages."""

    @pytest.mark.parametrize(
        ("override", "fragment"),
        [
            ({"seed": -1}, "seed"),
            ({"precision": "half"}, "precision"),
            ({"episode": {"shots": 0}}, "episode.shots"),
            ({"variant": {"name": "bogus"}}, "unknown variant"),
            ({"variant": {"metric": "manhattan"}}, "variant.metric"),
            ({"variant": {"pooling_kernels": [2, 2]}}, "pooling_kernels"),
            ({"benchmark": {"base_sizes": [0.3]}}, "base_sizes"),
            ({"pretrain": {"momentum": 1.0}}, "pretrain.momentum"),
            ({"evaluation": {"interpolation": "spline"}}, "interpolation"),
            ({"typo": 1}, "unknown setting 'typo'"),
        ],
    )
    def test_invalid_settings(self, override, fragment):
        with pytest.raises(SplurgeContextTransformerConfigValidationError, match=fragment):
            validate_config(merge_config(get_default_config(), override))

    def test_all_errors_reported_together(self):
        config = merge_config(get_default_config(), {"seed": -1, "workers": 0})
        with pytest.raises(SplurgeContextTransformerConfigValidationError) as exc_info:
            validate_config(config)
        assert len(exc_info.value.details["errors"]) == 2

    def test_unload_conflicts_with_pretraining(self):
        config = merge_config(get_default_config(), {"variant": {"name": "unload"}})
        validate_config(config, command="finetune")
        with pytest.raises(SplurgeContextTransformerConfigValidationError, match="unload-at-test"):
            validate_config(config, command="pretrain")

    def test_per_scale_theta_conflicts_with_incremental(self):
        config = merge_config(get_default_config(), {"variant": {"theta": "per-scale"}})
        with pytest.raises(SplurgeContextTransformerConfigValidationError, match="per-scale"):
            validate_config(config, command="incremental")

    def test_non_local_warns_about_kernels(self):
        config = merge_config(get_default_config(), {"variant": {"name": "non-local"}})
        assert validate_config(config) == ["non-local mode ignores variant.pooling_kernels"]


@pytest.mark.unit
class TestExperimentConfig:
    """Test the typed view."""

    def test_round_trip(self, tiny_config):
        assert ExperimentConfig.from_dict(tiny_config.to_dict()) == tiny_config

    def test_prior_spec_and_train_settings(self, tiny_config):
        assert tiny_config.benchmark.prior_spec().grids == ((8, 8), (4, 4), (2, 2))
        settings = tiny_config.train_settings("finetune", seed=3)
        assert settings.steps == 2
        assert settings.seed == 3
        assert settings.log_every == 0

    def test_overrides_apply_to_configured_variant_only(self, tiny_config_factory):
        config = tiny_config_factory(variant={"name": "full", "metric": "cosine"})
        assert config.flags().metric == "cosine"
        assert config.flags("unload").metric == "dot"

    def test_pooling_from_kernels(self, tiny_config):
        pooling = tiny_config.pooling()
        assert pooling.entries == ((2, 2), (2, 2), None)
        assert pooling.kind == "max"

    def test_with_overrides(self, tiny_config):
        changed = tiny_config.with_overrides(seed=3)
        assert changed.run.seed == 3
        assert changed.benchmark == tiny_config.benchmark

    def test_invalid_resolved_flags(self, tiny_config_factory):
        config = ExperimentConfig.from_dict(
            merge_config(tiny_config_factory().to_dict(), {"variant": {"pool": "median"}}), validate=False
        )
        with pytest.raises(SplurgeContextTransformerConfigurationError):
            config.flags()
