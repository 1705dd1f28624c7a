"""
Integration tests for the experiment entry points.

Runs the tiny configuration through pretrain, fine-tune, evaluation,
incremental fine-tuning, sweeps and data dumps, checking the artifacts each
command leaves under its output directory.
"""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from splurge_context_transformer.config import CONFIG_FILE_NAME
from splurge_context_transformer.evaluation import EvalReport
from splurge_context_transformer.exceptions import (
    SplurgeContextTransformerFileError,
    SplurgeContextTransformerParameterError,
)
from splurge_context_transformer.main import (
    ABLATION_FILE,
    EVAL_FILE,
    INCREMENTAL_FILE,
    SOURCE_EVAL_FILE,
    run_ablate,
    run_eval,
    run_finetune,
    run_gen_data,
    run_incremental,
)
from splurge_context_transformer.result_models import RunStatus


@pytest.mark.integration
@pytest.mark.slow
class TestFineTuneWorkflow:
    """Pretrained source checkpoint through fine-tuning and evaluation."""

    def test_pretrain_artifacts(self, tiny_source_checkpoint: Path) -> None:
        out = tiny_source_checkpoint.parent
        assert (out / CONFIG_FILE_NAME).is_file()
        report = EvalReport.from_json((out / SOURCE_EVAL_FILE).read_text(encoding="utf-8"))
        assert len(report.classes) == 12
        assert report.metadata["stage"] == "source"

    def test_finetune_then_eval_is_reproducible(self, tiny_config_factory, tiny_source_checkpoint: Path) -> None:
        tuned = run_finetune(tiny_config_factory("full"), tiny_source_checkpoint)
        assert tuned.checkpoint is not None and tuned.checkpoint.is_file()
        assert tuned.variant == "full"
        eval_json = json.loads((tuned.out_dir / EVAL_FILE).read_text(encoding="utf-8"))
        assert eval_json["metadata"]["variant"] == "full"
        assert [c["class_id"] for c in eval_json["classes"]] == [12, 13, 14, 15]

        first = run_eval(tiny_config_factory("eval-a"), tuned.checkpoint)
        second = run_eval(tiny_config_factory("eval-b", workers=2), tuned.checkpoint)
        assert list(first.reports) == ["target"]
        assert first.report_paths["target"].read_bytes() == second.report_paths["target"].read_bytes()

    def test_finetune_is_deterministic(self, tiny_config_factory, tiny_source_checkpoint: Path) -> None:
        a = run_finetune(tiny_config_factory("a", variant={"name": "unload"}), tiny_source_checkpoint)
        b = run_finetune(tiny_config_factory("b", variant={"name": "unload"}), tiny_source_checkpoint)
        assert (a.out_dir / EVAL_FILE).read_bytes() == (b.out_dir / EVAL_FILE).read_bytes()
        assert a.checkpoint.read_bytes() == b.checkpoint.read_bytes()

    def test_finetune_needs_source_checkpoint(self, tiny_config_factory, tiny_source_checkpoint: Path) -> None:
        tuned = run_finetune(tiny_config_factory("first", variant={"name": "baseline"}), tiny_source_checkpoint)
        with pytest.raises(SplurgeContextTransformerParameterError):
            run_finetune(tiny_config_factory("second"), tuned.checkpoint)

    def test_missing_checkpoint(self, tiny_config, temp_dir: Path) -> None:
        with pytest.raises(SplurgeContextTransformerFileError):
            run_finetune(tiny_config, temp_dir / "absent.ckpt")

    def test_eval_of_source_checkpoint(self, tiny_config, tiny_source_checkpoint: Path) -> None:
        result = run_eval(tiny_config, tiny_source_checkpoint)
        assert list(result.reports) == ["source"]
        assert result.report_paths["source"].name == "eval_source.json"


@pytest.mark.integration
@pytest.mark.slow
class TestIncrementalWorkflow:
    """Incremental fine-tuning and evaluation of the joint model."""

    def test_before_and_after_reports(self, tiny_config, tiny_source_checkpoint: Path) -> None:
        result = run_incremental(tiny_config, tiny_source_checkpoint)
        summary = json.loads((result.out_dir / INCREMENTAL_FILE).read_text(encoding="utf-8"))
        assert set(summary) == {"before", "after", "shots", "trial"}
        assert set(summary["after"]) == {"source", "target"}
        assert (result.out_dir / "incremental_source.json").is_file()
        assert (result.out_dir / "incremental_target.json").is_file()
        assert result.checkpoint is not None

        evaluated = run_eval(tiny_config.with_overrides(out_dir=str(result.out_dir / "eval")), result.checkpoint)
        assert sorted(evaluated.reports) == ["source", "target"]
        assert len(evaluated.reports["source"].classes) == 12
        assert len(evaluated.reports["target"].classes) == 4


@pytest.mark.integration
@pytest.mark.slow
class TestSweepAndData:
    """Sweeps and benchmark dumps."""

    def test_ablation_sweep(self, tiny_config_factory, tiny_source_checkpoint: Path) -> None:
        config = tiny_config_factory("sweep", workers=2)
        result = run_ablate(config, tiny_source_checkpoint, variants=["baseline", "full"], trials=[1])
        assert [(e.variant, e.shots, e.trial) for e in result.entries] == [("baseline", 1, 1), ("full", 1, 1)]
        assert result.status is RunStatus.OK
        payload = json.loads((result.out_dir / ABLATION_FILE).read_text(encoding="utf-8"))
        assert set(payload["means"]) == {"baseline", "full"}
        assert (result.out_dir / "full" / "shots-1" / "trial-1" / EVAL_FILE).is_file()

    def test_gen_data(self, tiny_config) -> None:
        result = run_gen_data(tiny_config)
        assert result.scene_counts["source_train"] == 8
        assert result.scene_counts["target_train"] == 4
        assert result.scene_counts["target_test"] == 6
        for path in result.annotation_files.values():
            assert path.is_file()
