"""
CLI output helpers for splurge-context-transformer.

Contains text and JSON rendering utilities used by the CLI: per-class
evaluation tables, the variant comparison and shot/trial sweeps, and the
before/after source and target columns of incremental runs.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

import json
import math
from collections.abc import Mapping, Sequence
from typing import Any

try:
    from tabulate import tabulate  # type: ignore
except Exception:  # pragma: no cover - fallback when tabulate unavailable
    tabulate = None

from .detector import VARIANTS
from .evaluation import EvalReport
from .result_models import (
    AblationRunResult,
    EvalRunResult,
    GenDataResult,
    GradcheckRunResult,
    IncrementalRunResult,
    TrainRunResult,
    result_to_dict,
)

# Module domains
DOMAINS = ["cli", "output", "formatting"]

__all__ = [
    "simple_table_format",
    "format_table",
    "render_report_table",
    "render_transfer_table",
    "render_transfer_means",
    "render_sweep_table",
    "render_incremental_table",
    "render_gradcheck_table",
    "pretty_print_result",
]

# Private constants for rendering
_DEFAULT_COLUMN_WIDTH: int = 10
_SEPARATOR_LENGTH: int = 60
_MISSING: str = "-"


def simple_table_format(
    headers: list[str],
    rows: list[list[Any]],
) -> str:
    """Simple table formatting when tabulate is not available.

    Args:
        headers: List of column headers.
        rows: List of rows (each row is a list of values).

    Returns:
        Formatted table string.
    """
    if not headers or not rows:
        return "(No data)"

    col_widths: list[int] = []
    for i, header in enumerate(headers):
        max_width = len(str(header))
        for row in rows:
            if i < len(row):
                max_width = max(max_width, len(str(row[i])))
        col_widths.append(max_width + 2)

    lines: list[str] = []
    header_line = "|"
    separator_line = "|"
    for header, width in zip(headers, col_widths, strict=False):
        header_line += f" {str(header):<{width - 1}}|"
        separator_line += "-" * width + "|"
    lines.append(header_line)
    lines.append(separator_line)

    for row in rows:
        row_line = "|"
        for i, value in enumerate(row):
            width = col_widths[i] if i < len(col_widths) else _DEFAULT_COLUMN_WIDTH
            row_line += f" {str(value):<{width - 1}}|"
        lines.append(row_line)

    return "\n".join(lines)


def format_table(headers: list[str], rows: list[list[Any]]) -> str:
    """Grid table via tabulate, or the plain fallback."""
    if tabulate is not None:
        return str(tabulate(rows, headers=headers, tablefmt="grid"))
    return simple_table_format(headers, rows)


def _points(value: float | None) -> str:
    """AP/mAP in [0, 1] rendered as percentage points, the way detection tables report them."""
    if value is None or math.isnan(value):
        return _MISSING
    return f"{100.0 * value:.1f}"


def render_report_table(report: EvalReport, title: str | None = None) -> str:
    """Per-class AP, match counts and the correct/confused/missed split, closed by the mAP row."""
    headers = ["class", "AP", "GT", "TP", "FP", "FN", "correct %", "confused %", "missed %"]
    rows: list[list[Any]] = []
    for result in report.classes:
        correct, confused, missed = result.confusion.percentages()
        rows.append(
            [
                result.name,
                _points(result.ap),
                result.num_gt,
                result.true_positives,
                result.false_positives,
                result.false_negatives,
                f"{correct:.1f}",
                f"{confused:.1f}",
                f"{missed:.1f}",
            ]
        )
    rows.append([f"mAP@{report.iou_threshold:g}", _points(report.mean_ap), "", "", "", "", "", "", ""])
    table = format_table(headers, rows)
    return f"{title}\n{table}" if title else table


def render_transfer_table(means: Mapping[str, float]) -> str:
    """One row per variant with its description and mAP, in the order given."""
    rows = [
        [name, VARIANTS[name].description if name in VARIANTS else "", _points(value)]
        for name, value in means.items()
    ]
    return format_table(["variant", "setting", "mAP"], rows)


def render_sweep_table(result: AblationRunResult) -> str:
    """Variant rows against shot columns (mean over trials), or trial columns for a single shot count."""
    shots = result.shots()
    if len(shots) > 1:
        headers = ["variant", *(f"{n}-shot" for n in shots)]
        rows = [[v, *(_points(result.mean_by(v, n)) for n in shots)] for v in result.variants()]
        return format_table(headers, rows)
    trials = result.trials()
    score = {(e.variant, e.trial): e.mean_ap for e in result.entries}
    headers = ["variant", *(f"trial {k}" for k in trials), "mean"]
    rows = [
        [v, *(_points(score.get((v, k))) for k in trials), _points(result.mean_by(v))] for v in result.variants()
    ]
    return format_table(headers, rows)


def render_incremental_table(result: IncrementalRunResult) -> str:
    """Source (S) and target (T) mAP before and after incremental fine-tuning."""
    rows = [
        ["before", _points(result.source_before), _points(result.target_zero_shot)],
        ["after", _points(result.source_after), _points(result.target_after)],
    ]
    return format_table(["", "S", "T"], rows)


def render_gradcheck_table(result: GradcheckRunResult, cases: Mapping[str, Any] | None = None) -> str:
    """Module verdicts, followed by per-case errors when ``cases`` is given."""
    rows: list[list[Any]] = [[module, "pass" if ok else "FAIL"] for module, ok in sorted(result.modules.items())]
    table = format_table(["module", "gradcheck"], rows)
    if cases:
        detail = [[name, f"{entry['max_rel_error']:.2e}"] for name, entry in sorted(cases.items())]
        table += "\n" + format_table(["case", "max rel error"], detail)
    return table


def _banner(text: str) -> None:
    print(f"\n{'=' * _SEPARATOR_LENGTH}")
    print(text)
    print(f"{'=' * _SEPARATOR_LENGTH}")


def pretty_print_result(result: Any, *, output_json: bool = False, verbose: bool = False) -> None:
    """Print a command result as text tables, or as JSON.

    Args:
        result: Any result model returned by the ``main`` entry points.
        output_json: If True, print JSON instead of human-readable tables.
        verbose: Include per-class and per-case detail.
    """
    if output_json:
        print(json.dumps(result_to_dict(result), ensure_ascii=False, indent=2, sort_keys=True))
        return

    if isinstance(result, TrainRunResult):
        _banner(f"{result.command}: {result.out_dir}")
        print(f"Checkpoint: {result.checkpoint}")
        print(f"Steps: {result.steps} (skipped batches: {result.skipped})")
        if result.final_loss is not None:
            print(f"Final loss: {result.final_loss:.4f} (decreasing: {'yes' if result.loss_decreased else 'no'})")
        if not math.isnan(result.affinity_mass):
            print(f"Mean top-3 affinity mass on context-dependent classes: {result.affinity_mass:.3f}")
        if result.report is not None:
            print(render_report_table(result.report) if verbose else f"mAP: {_points(result.report.mean_ap)}")
    elif isinstance(result, EvalRunResult):
        for split, report in result.reports.items():
            _banner(f"{split} evaluation of {result.checkpoint}")
            print(render_report_table(report))
    elif isinstance(result, IncrementalRunResult):
        _banner(f"incremental: {result.out_dir}")
        print(render_incremental_table(result))
    elif isinstance(result, GradcheckRunResult):
        _banner(f"gradcheck: {'PASSED' if result.passed else 'FAILED'} (worst {result.worst:.2e})")
        print(render_gradcheck_table(result))
        for name in result.failures:
            print(f"FAILED: {name}")
    elif isinstance(result, AblationRunResult):
        _banner(f"ablate: {result.out_dir}")
        print(render_sweep_table(result))
        if len(result.shots()) == 1 and len(result.variants()) > 1:
            print(render_transfer_means(result))
        for message in result.failed_checks:
            print(f"CHECK FAILED: {message}")
    elif isinstance(result, GenDataResult):
        _banner(f"gen-data: {result.out_dir}")
        print(format_table(["set", "scenes"], [[k, v] for k, v in result.scene_counts.items()]))
        if result.oracle_accuracy is not None:
            print(f"Centroid oracle accuracy (no context): {result.oracle_accuracy:.3f}")
    else:
        raise TypeError(f"Unsupported result type: {type(result).__name__}")


def render_transfer_means(result: AblationRunResult, variants: Sequence[str] | None = None) -> str:
    """Transfer table built from a sweep's trial means."""
    names = list(variants or result.variants())
    return render_transfer_table({name: result.mean_by(name) for name in names})
