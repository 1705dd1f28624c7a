"""
Unit tests for cli_output.py module.

Tests table rendering for evaluation reports, sweeps and incremental runs,
and the JSON output path.
"""

import json
from pathlib import Path

import numpy as np
import pytest

import splurge_context_transformer.cli_output as cli_output
from splurge_context_transformer.anchors import Box
from splurge_context_transformer.cli_output import (
    format_table,
    pretty_print_result,
    render_incremental_table,
    render_report_table,
    render_sweep_table,
    render_transfer_table,
    simple_table_format,
)
from splurge_context_transformer.detector import Detection
from splurge_context_transformer.evaluation import evaluate_detections
from splurge_context_transformer.result_models import (
    AblationEntry,
    AblationRunResult,
    GradcheckRunResult,
    IncrementalRunResult,
    TrainRunResult,
)
from splurge_context_transformer.synthdata import Annotation, Scene

BOX = Box(0.5, 0.5, 0.2, 0.2)


def _report():
    scene = Scene(np.zeros((4, 4, 3)), (Annotation(BOX, 12),), seed=0, domain="target")
    return evaluate_detections(
        [[Detection(BOX, 12, 0.9)]], [scene], [12, 13], class_names={12: "orange-ring-a", 13: "orange-ring-b"}
    )


@pytest.mark.unit
class TestTables:
    """Test table builders."""

    def test_simple_table_fallback(self):
        table = simple_table_format(["a", "bb"], [[1, 2], [333, 4]])
        lines = table.splitlines()
        assert lines[0].startswith("| a")
        assert "333" in lines[3]
        assert simple_table_format([], []) == "(No data)"

    def test_format_table_without_tabulate(self, mocker):
        mocker.patch.object(cli_output, "tabulate", None)
        assert format_table(["x"], [[1]]) == simple_table_format(["x"], [[1]])

    def test_report_table_in_points(self):
        table = render_report_table(_report(), title="target")
        assert table.startswith("target\n")
        assert "orange-ring-a" in table
        assert "100.0" in table
        assert "mAP@0.5" in table

    def test_skipped_class_shows_dash(self):
        row = next(line for line in render_report_table(_report()).splitlines() if "orange-ring-b" in line)
        assert " - " in row

    def test_transfer_table_uses_descriptions(self):
        table = render_transfer_table({"baseline": 0.25, "full": 0.5})
        assert "25.0" in table
        assert "50.0" in table
        assert "Context-Transformer" in table

    def test_sweep_table_by_shots_and_by_trials(self):
        entries = [AblationEntry("full", n, 1, 0.1 * n, 0) for n in (1, 2)]
        by_shots = render_sweep_table(AblationRunResult(Path("o"), entries))
        assert "1-shot" in by_shots
        assert "2-shot" in by_shots
        trials = [AblationEntry("full", 1, k, 0.2, 0) for k in (1, 2)]
        by_trials = render_sweep_table(AblationRunResult(Path("o"), trials))
        assert "trial 2" in by_trials
        assert "mean" in by_trials

    def test_incremental_table(self):
        table = render_incremental_table(IncrementalRunResult(Path("o"), None, 0.5, 0.0, 0.45, 0.3))
        assert "before" in table
        assert "45.0" in table


@pytest.mark.unit
class TestPrettyPrint:
    """Test printing of command results."""

    def test_json_output(self, capsys):
        pretty_print_result(IncrementalRunResult(Path("o"), None, 0.5, 0.0, 0.4, 0.3), output_json=True)
        data = json.loads(capsys.readouterr().out)
        assert data["after"] == {"source": 0.4, "target": 0.3}

    def test_train_result_verbose_prints_table(self, capsys):
        result = TrainRunResult("finetune", Path("o"), Path("o/t.ckpt"), 2, 0, 1.5, True, report=_report())
        pretty_print_result(result, verbose=True)
        out = capsys.readouterr().out
        assert "Final loss: 1.5000" in out
        assert "orange-ring-a" in out

    def test_gradcheck_failures_listed(self, capsys):
        result = GradcheckRunResult(Path("o"), Path("o/g.json"), False, ["numerics.conv2d"], {"numerics": False}, 0.2)
        pretty_print_result(result)
        out = capsys.readouterr().out
        assert "FAILED: numerics.conv2d" in out
        assert "FAIL" in out

    def test_single_shot_sweep_adds_transfer_table(self, capsys):
        entries = [AblationEntry(v, 1, 1, 0.3, 0) for v in ("baseline", "full")]
        failed = ["full 0.3000 is less than baseline 0.3000 + 0.05"]
        result = AblationRunResult(Path("o"), entries, failed_checks=failed)
        pretty_print_result(result)
        out = capsys.readouterr().out
        assert "setting" in out
        assert "CHECK FAILED" in out

    def test_unsupported_type(self):
        with pytest.raises(TypeError):
            pretty_print_result(object())
