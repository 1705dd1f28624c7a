"""
Unit tests for result_models.py module.

Tests the typed command results and their dict conversion.
"""

import json
import math
from pathlib import Path

import pytest

from splurge_context_transformer.result_models import (
    AblationEntry,
    AblationRunResult,
    EvalRunResult,
    GenDataResult,
    GradcheckRunResult,
    IncrementalRunResult,
    RunStatus,
    TrainRunResult,
    result_to_dict,
    results_to_dicts,
)


def _sweep() -> AblationRunResult:
    entries = [
        AblationEntry("baseline", 1, 1, 0.2, 11),
        AblationEntry("baseline", 1, 2, 0.4, 12),
        AblationEntry("full", 1, 1, 0.5, 11),
        AblationEntry("full", 1, 2, float("nan"), 12),
        AblationEntry("full", 5, 1, 0.7, 11),
    ]
    return AblationRunResult(out_dir=Path("runs/sweep"), entries=entries)


@pytest.mark.unit
class TestRunStatus:
    """Test RunStatus enum."""

    def test_values(self):
        assert RunStatus.OK == "ok"
        assert RunStatus.CHECK_FAILED.value == "check-failed"


@pytest.mark.unit
class TestAblationRunResult:
    """Test sweep aggregation."""

    def test_mean_by_skips_nan(self):
        sweep = _sweep()
        assert sweep.mean_by("baseline") == pytest.approx(0.3)
        assert sweep.mean_by("full", 1) == pytest.approx(0.5)
        assert math.isnan(sweep.mean_by("unload"))

    def test_axes(self):
        sweep = _sweep()
        assert sweep.variants() == ["baseline", "full"]
        assert sweep.shots() == [1, 5]
        assert sweep.trials() == [1, 2]

    def test_status_follows_failed_checks(self):
        sweep = _sweep()
        assert sweep.status is RunStatus.OK
        sweep.failed_checks.append("full below baseline")
        assert sweep.status is RunStatus.CHECK_FAILED


@pytest.mark.unit
class TestDerivedValues:
    """Test properties computed from stored fields."""

    def test_incremental_retention_and_gain(self):
        result = IncrementalRunResult(Path("o"), None, 0.8, 0.1, 0.6, 0.5)
        assert result.source_retention == pytest.approx(0.75)
        assert result.target_gain == pytest.approx(0.4)
        assert math.isnan(IncrementalRunResult(Path("o"), None, 0.0, 0.0, 0.0, 0.0).source_retention)

    def test_gradcheck_status(self):
        failed = GradcheckRunResult(Path("o"), Path("o/g.json"), False, ["numerics.conv2d"], {"numerics": False}, 0.1)
        assert failed.status is RunStatus.CHECK_FAILED

    def test_train_mean_ap_without_report(self):
        result = TrainRunResult("pretrain", Path("o"), None, 5, 0, None, False)
        assert math.isnan(result.mean_ap)


@pytest.mark.unit
class TestResultToDict:
    """Test JSON-ready conversion."""

    def test_nan_becomes_null(self):
        data = result_to_dict(TrainRunResult("finetune", Path("o"), Path("o/t.ckpt"), 5, 1, 0.5, True))
        assert data["mean_ap"] is None
        assert data["affinity_mass"] is None
        assert data["checkpoint"] == str(Path("o/t.ckpt"))
        json.dumps(data, allow_nan=False)

    def test_every_result_type_serializes(self):
        results = [
            EvalRunResult(Path("o"), Path("c.ckpt")),
            IncrementalRunResult(Path("o"), None, 0.5, float("nan"), 0.4, 0.3),
            GradcheckRunResult(Path("o"), Path("o/g.json"), True, [], {"numerics": True}, 1e-8),
            _sweep(),
            GenDataResult(Path("o"), {"target_test": Path("o/a.jsonl")}, {"target_test": 3}, 0.5, {0: 0.5}),
        ]
        dicts = results_to_dicts(results)
        assert [d["command"] for d in dicts] == ["eval", "incremental", "gradcheck", "ablate", "gen-data"]
        for data in dicts:
            json.dumps(data, allow_nan=False)
        assert dicts[3]["entries"][3]["mean_ap"] is None
        assert dicts[4]["oracle_within_group"] == {"0": 0.5}

    def test_dicts_pass_through(self):
        assert results_to_dicts([{"command": "x"}]) == [{"command": "x"}]

    def test_unsupported_type(self):
        with pytest.raises(TypeError):
            result_to_dict(object())
