"""
Result models for command runs.

Typed records returned by the entry points in :mod:`main`, each with a
plain-dict form for JSON output.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

from .evaluation import EvalReport

# Module domains
DOMAINS = ["models", "results", "commands"]

__all__ = [
    "RunStatus",
    "TrainRunResult",
    "EvalRunResult",
    "IncrementalRunResult",
    "GradcheckRunResult",
    "AblationEntry",
    "AblationRunResult",
    "GenDataResult",
    "result_to_dict",
    "results_to_dicts",
    "finite_or_none",
]


class RunStatus(str, Enum):
    """Outcome of a command run."""

    OK = "ok"
    CHECK_FAILED = "check-failed"


def finite_or_none(value: float | None) -> float | None:
    """NaN (and None) as None, for JSON output."""
    return None if value is None or math.isnan(value) else value


def _path(value: Path | None) -> str | None:
    return None if value is None else str(value)


@dataclass
class TrainRunResult:
    """A pretraining or fine-tuning run.

    Attributes:
        command: ``pretrain`` or ``finetune``.
        out_dir: Run output directory.
        checkpoint: Saved checkpoint path.
        steps: Optimizer steps requested.
        skipped: Batches skipped for lack of positive priors.
        final_loss: Last finite loss, if any step ran.
        loss_decreased: Whether the late losses average below the early ones.
        report: Evaluation on the held-out scenes.
        affinity_mass: Mean top-3 attention mass on context-dependent classes (NaN without context).
    """

    command: str
    out_dir: Path
    checkpoint: Path | None
    steps: int
    skipped: int
    final_loss: float | None
    loss_decreased: bool
    report: EvalReport | None = None
    affinity_mass: float = float("nan")
    variant: str | None = None

    @property
    def mean_ap(self) -> float:
        return float("nan") if self.report is None else self.report.mean_ap


@dataclass
class EvalRunResult:
    """Evaluation of one checkpoint; incremental checkpoints yield a source and a target report."""

    out_dir: Path
    checkpoint: Path
    reports: dict[str, EvalReport] = field(default_factory=dict)
    report_paths: dict[str, Path] = field(default_factory=dict)


@dataclass
class IncrementalRunResult:
    """Source (S) and target (T) mAP before and after incremental fine-tuning.

    ``source_before`` is the pretrained detector on its own classes;
    ``target_zero_shot`` is the untrained target pathway of the joint model.
    """

    out_dir: Path
    checkpoint: Path | None
    source_before: float
    target_zero_shot: float
    source_after: float
    target_after: float
    source_report: EvalReport | None = None
    target_report: EvalReport | None = None

    @property
    def source_retention(self) -> float:
        if not self.source_before:
            return float("nan")
        return self.source_after / self.source_before

    @property
    def target_gain(self) -> float:
        return self.target_after - self.target_zero_shot


@dataclass
class GradcheckRunResult:
    out_dir: Path
    report_path: Path
    passed: bool
    failures: list[str]
    modules: dict[str, bool]
    worst: float

    @property
    def status(self) -> RunStatus:
        return RunStatus.OK if self.passed else RunStatus.CHECK_FAILED


@dataclass(frozen=True)
class AblationEntry:
    """One fine-tuning run of a sweep."""

    variant: str
    shots: int
    trial: int
    mean_ap: float
    seed: int


@dataclass
class AblationRunResult:
    """Every run of a sweep plus the directional checks that were requested."""

    out_dir: Path
    entries: list[AblationEntry] = field(default_factory=list)
    failed_checks: list[str] = field(default_factory=list)
    checks_requested: bool = False

    @property
    def status(self) -> RunStatus:
        return RunStatus.CHECK_FAILED if self.failed_checks else RunStatus.OK

    def mean_by(self, variant: str, shots: int | None = None) -> float:
        """Mean mAP of a variant across trials (NaN when absent)."""
        values = [
            e.mean_ap
            for e in self.entries
            if e.variant == variant and (shots is None or e.shots == shots) and not math.isnan(e.mean_ap)
        ]
        return sum(values) / len(values) if values else float("nan")

    def variants(self) -> list[str]:
        return list(dict.fromkeys(e.variant for e in self.entries))

    def shots(self) -> list[int]:
        return sorted({e.shots for e in self.entries})

    def trials(self) -> list[int]:
        return sorted({e.trial for e in self.entries})


@dataclass
class GenDataResult:
    out_dir: Path
    annotation_files: dict[str, Path]
    scene_counts: dict[str, int]
    oracle_accuracy: float | None = None
    oracle_within_group: dict[int, float] = field(default_factory=dict)


def result_to_dict(result: Any) -> dict[str, Any]:
    """JSON-ready form of any command result."""
    if isinstance(result, TrainRunResult):
        return {
            "command": result.command,
            "out_dir": str(result.out_dir),
            "checkpoint": _path(result.checkpoint),
            "variant": result.variant,
            "steps": result.steps,
            "skipped": result.skipped,
            "final_loss": result.final_loss,
            "loss_decreased": result.loss_decreased,
            "mean_ap": finite_or_none(result.mean_ap),
            "affinity_mass": finite_or_none(result.affinity_mass),
        }
    if isinstance(result, EvalRunResult):
        return {
            "command": "eval",
            "out_dir": str(result.out_dir),
            "checkpoint": str(result.checkpoint),
            "reports": {name: report.to_dict() for name, report in result.reports.items()},
        }
    if isinstance(result, IncrementalRunResult):
        return {
            "command": "incremental",
            "out_dir": str(result.out_dir),
            "checkpoint": _path(result.checkpoint),
            "before": {
                "source": finite_or_none(result.source_before),
                "target": finite_or_none(result.target_zero_shot),
            },
            "after": {"source": finite_or_none(result.source_after), "target": finite_or_none(result.target_after)},
            "source_retention": finite_or_none(result.source_retention),
        }
    if isinstance(result, GradcheckRunResult):
        return {
            "command": "gradcheck",
            "out_dir": str(result.out_dir),
            "report": str(result.report_path),
            "passed": result.passed,
            "failures": list(result.failures),
            "modules": dict(result.modules),
            "worst": result.worst,
        }
    if isinstance(result, AblationRunResult):
        return {
            "command": "ablate",
            "out_dir": str(result.out_dir),
            "status": result.status.value,
            "failed_checks": list(result.failed_checks),
            "entries": [
                {
                    "variant": e.variant,
                    "shots": e.shots,
                    "trial": e.trial,
                    "seed": e.seed,
                    "mean_ap": finite_or_none(e.mean_ap),
                }
                for e in result.entries
            ],
        }
    if isinstance(result, GenDataResult):
        return {
            "command": "gen-data",
            "out_dir": str(result.out_dir),
            "annotation_files": {k: str(v) for k, v in result.annotation_files.items()},
            "scene_counts": dict(result.scene_counts),
            "oracle_accuracy": result.oracle_accuracy,
            "oracle_within_group": {str(k): v for k, v in result.oracle_within_group.items()},
        }
    raise TypeError(f"Unsupported result type: {type(result).__name__}")


def results_to_dicts(results: Sequence[Any]) -> list[dict[str, Any]]:
    """Normalize typed results (or dicts, passed through) to dicts."""
    return [item if isinstance(item, dict) else result_to_dict(item) for item in results]
