"""
VOC-style detection evaluation.

Average precision at IoU 0.5 per class (all-point or 11-point
interpolation), mean AP over the classes that have ground truth, and a
per-class confusion decomposition: for each ground-truth object the
best-scoring detection of any class that overlaps it is either the right
class (correct), a wrong class (confused) or absent (missed).

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

import contextvars
import json
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .anchors import Box, iou
from .detector import Detection
from .exceptions import SplurgeContextTransformerParameterError, SplurgeContextTransformerValueError
from .logging import configure_module_logging, performance_context
from .synthdata import Scene

# Module domains
DOMAINS = ["evaluation", "metrics", "reporting"]

__all__ = [
    "IOU_THRESHOLD",
    "SCORE_FLOOR",
    "INTERPOLATIONS",
    "ScoredBox",
    "ConfusionTriple",
    "ClassResult",
    "EvalReport",
    "match_detections",
    "average_precision",
    "mean_average_precision",
    "confusion_breakdown",
    "evaluate_detections",
    "Predictor",
    "predict_all",
    "evaluate_model",
]

IOU_THRESHOLD = 0.5
SCORE_FLOOR = 0.3
INTERPOLATIONS = ("all-point", "11-point")

Predictor = Callable[[np.ndarray], list[Detection]]

logger = configure_module_logging("evaluation")


@dataclass(frozen=True)
class ScoredBox:
    """A detection of one class in one scene."""

    scene_id: int
    box: Box
    score: float


def match_detections(
    detections: Sequence[ScoredBox],
    ground_truth: Mapping[int, Sequence[Box]],
    iou_threshold: float = IOU_THRESHOLD,
) -> tuple[np.ndarray, np.ndarray]:
    """Greedy VOC matching for one class.

    Detections are visited by descending score (ties keep input order).
    Each takes the ground truth box it overlaps most; it is a true positive
    when that overlap reaches ``iou_threshold`` and the box is still free,
    otherwise a false positive.

    Returns:
        ``(tp, fp)`` 0/1 arrays in visiting order.
    """
    order = sorted(range(len(detections)), key=lambda i: -detections[i].score)
    taken = {scene: np.zeros(len(boxes), dtype=bool) for scene, boxes in ground_truth.items()}
    tp = np.zeros(len(order))
    fp = np.zeros(len(order))
    for rank, index in enumerate(order):
        det = detections[index]
        boxes = ground_truth.get(det.scene_id, ())
        best, best_iou = -1, 0.0
        for j, gt in enumerate(boxes):
            overlap = iou(det.box, gt)
            if overlap > best_iou:
                best, best_iou = j, overlap
        if best >= 0 and best_iou >= iou_threshold and not taken[det.scene_id][best]:
            taken[det.scene_id][best] = True
            tp[rank] = 1.0
        else:
            fp[rank] = 1.0
    return tp, fp


def _precision_recall(tp: np.ndarray, fp: np.ndarray, num_gt: int) -> tuple[np.ndarray, np.ndarray]:
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(fp)
    recall = tp_cum / max(num_gt, 1)
    precision = tp_cum / np.maximum(tp_cum + fp_cum, np.finfo(np.float64).eps)
    return recall, precision


def _integrate(recall: np.ndarray, precision: np.ndarray, interpolation: str) -> float:
    if interpolation == "11-point":
        points = []
        for threshold in np.linspace(0.0, 1.0, 11):
            reached = precision[recall >= threshold]
            points.append(float(reached.max()) if reached.size else 0.0)
        return float(np.mean(points))
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


def _check_interpolation(interpolation: str) -> None:
    if interpolation not in INTERPOLATIONS:
        raise SplurgeContextTransformerParameterError(
            f"Unknown interpolation '{interpolation}'", details={"allowed": list(INTERPOLATIONS)}
        )


def average_precision(
    detections: Sequence[ScoredBox],
    ground_truth: Mapping[int, Sequence[Box]],
    iou_threshold: float = IOU_THRESHOLD,
    interpolation: str = "all-point",
) -> float | None:
    """AP of one class.

    Returns ``None`` when the class has neither ground truth nor detections
    (it is left out of mAP) and ``0.0`` when it has detections but no
    ground truth.
    """
    _check_interpolation(interpolation)
    num_gt = sum(len(boxes) for boxes in ground_truth.values())
    if num_gt == 0:
        return None if not detections else 0.0
    if not detections:
        return 0.0
    tp, fp = match_detections(detections, ground_truth, iou_threshold)
    recall, precision = _precision_recall(tp, fp, num_gt)
    return _integrate(recall, precision, interpolation)


def mean_average_precision(aps: Mapping[int, float | None] | Sequence[float | None]) -> float:
    """Mean over the classes that were not skipped; NaN when every class was."""
    values = list(aps.values()) if isinstance(aps, Mapping) else list(aps)
    kept = [v for v in values if v is not None]
    return float(np.mean(kept)) if kept else float("nan")


@dataclass(frozen=True)
class ConfusionTriple:
    correct: int = 0
    confused: int = 0
    missed: int = 0

    @property
    def total(self) -> int:
        return self.correct + self.confused + self.missed

    def percentages(self) -> tuple[float, float, float]:
        if self.total == 0:
            return (0.0, 0.0, 0.0)
        scale = 100.0 / self.total
        return (self.correct * scale, self.confused * scale, self.missed * scale)


def confusion_breakdown(
    predictions: Mapping[int, Sequence[Detection]],
    ground_truth: Sequence[tuple[int, Box, int]],
    iou_threshold: float = IOU_THRESHOLD,
    score_floor: float = SCORE_FLOOR,
) -> dict[int, ConfusionTriple]:
    """Per ground-truth class counts of correct, confused and missed objects.

    Args:
        predictions: Detections of every class, keyed by scene id.
        ground_truth: ``(scene_id, box, class_id)`` for every object.
    """
    counts: dict[int, list[int]] = {}
    for scene_id, box, class_id in ground_truth:
        best: Detection | None = None
        for det in predictions.get(scene_id, ()):
            if det.score < score_floor or iou(det.box, box) < iou_threshold:
                continue
            if best is None or det.score > best.score:
                best = det
        slot = counts.setdefault(int(class_id), [0, 0, 0])
        if best is None:
            slot[2] += 1
        elif best.class_id == class_id:
            slot[0] += 1
        else:
            slot[1] += 1
    return {cid: ConfusionTriple(*triple) for cid, triple in sorted(counts.items())}


@dataclass
class ClassResult:
    class_id: int
    name: str
    ap: float | None
    num_gt: int
    num_detections: int
    true_positives: int
    false_positives: int
    false_negatives: int
    confusion: ConfusionTriple = field(default_factory=ConfusionTriple)
    recall: list[float] = field(default_factory=list)
    precision: list[float] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["confusion"] = {
            **asdict(self.confusion),
            "percent": list(self.confusion.percentages()),
        }
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ClassResult:
        confusion = data.get("confusion") or {}
        return cls(
            class_id=int(data["class_id"]),
            name=str(data["name"]),
            ap=None if data.get("ap") is None else float(data["ap"]),
            num_gt=int(data["num_gt"]),
            num_detections=int(data["num_detections"]),
            true_positives=int(data["true_positives"]),
            false_positives=int(data["false_positives"]),
            false_negatives=int(data["false_negatives"]),
            confusion=ConfusionTriple(
                int(confusion.get("correct", 0)), int(confusion.get("confused", 0)), int(confusion.get("missed", 0))
            ),
            recall=[float(v) for v in data.get("recall", [])],
            precision=[float(v) for v in data.get("precision", [])],
        )


@dataclass
class EvalReport:
    """Per-class AP and confusion, mAP and the run metadata they were computed under."""

    classes: list[ClassResult]
    mean_ap: float
    iou_threshold: float = IOU_THRESHOLD
    interpolation: str = "all-point"
    score_floor: float = SCORE_FLOOR
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def per_class_ap(self) -> dict[int, float | None]:
        return {c.class_id: c.ap for c in self.classes}

    @property
    def skipped_classes(self) -> list[int]:
        return [c.class_id for c in self.classes if c.ap is None]

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean_ap": None if np.isnan(self.mean_ap) else self.mean_ap,
            "iou_threshold": self.iou_threshold,
            "interpolation": self.interpolation,
            "score_floor": self.score_floor,
            "skipped_classes": self.skipped_classes,
            "confusion_protocol": "best-scoring overlapping detection of any class per ground-truth object",
            "classes": [c.to_dict() for c in self.classes],
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> EvalReport:
        mean_ap = data.get("mean_ap")
        return cls(
            classes=[ClassResult.from_dict(c) for c in data.get("classes", [])],
            mean_ap=float("nan") if mean_ap is None else float(mean_ap),
            iou_threshold=float(data.get("iou_threshold", IOU_THRESHOLD)),
            interpolation=str(data.get("interpolation", "all-point")),
            score_floor=float(data.get("score_floor", SCORE_FLOOR)),
            metadata=dict(data.get("metadata", {})),
        )

    @classmethod
    def from_json(cls, text: str) -> EvalReport:
        try:
            return cls.from_dict(json.loads(text))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise SplurgeContextTransformerValueError(f"Not an evaluation report: {exc}") from exc


def evaluate_detections(
    predictions: Sequence[Sequence[Detection]],
    scenes: Sequence[Scene],
    class_ids: Sequence[int],
    *,
    class_names: Mapping[int, str] | None = None,
    iou_threshold: float = IOU_THRESHOLD,
    interpolation: str = "all-point",
    score_floor: float = SCORE_FLOOR,
    metadata: Mapping[str, Any] | None = None,
) -> EvalReport:
    """Build a report from per-scene detections (``predictions[i]`` belongs to ``scenes[i]``).

    Only classes in ``class_ids`` are scored; detections of other classes
    still count as confusions.
    """
    _check_interpolation(interpolation)
    if len(predictions) != len(scenes):
        raise SplurgeContextTransformerParameterError(
            f"{len(predictions)} prediction lists for {len(scenes)} scenes"
        )
    names = class_names or {}
    by_scene = {scene.scene_id: list(dets) for scene, dets in zip(scenes, predictions, strict=True)}
    objects = [(scene.scene_id, a.box, a.class_id) for scene in scenes for a in scene.annotations]
    confusion = confusion_breakdown(by_scene, objects, iou_threshold, score_floor)

    results = []
    for class_id in class_ids:
        gts: dict[int, list[Box]] = {}
        for scene_id, box, cid in objects:
            if cid == class_id:
                gts.setdefault(scene_id, []).append(box)
        dets = [
            ScoredBox(scene.scene_id, d.box, d.score)
            for scene, scene_dets in zip(scenes, predictions, strict=True)
            for d in scene_dets
            if d.class_id == class_id
        ]
        num_gt = sum(len(b) for b in gts.values())
        ap = average_precision(dets, gts, iou_threshold, interpolation)
        tp, fp = match_detections(dets, gts, iou_threshold) if dets else (np.zeros(0), np.zeros(0))
        recall, precision = _precision_recall(tp, fp, num_gt) if dets else (np.zeros(0), np.zeros(0))
        true_positives = int(tp.sum())
        results.append(
            ClassResult(
                class_id=int(class_id),
                name=names.get(class_id, str(class_id)),
                ap=ap,
                num_gt=num_gt,
                num_detections=len(dets),
                true_positives=true_positives,
                false_positives=int(fp.sum()),
                false_negatives=num_gt - true_positives,
                confusion=confusion.get(int(class_id), ConfusionTriple()),
                recall=[float(v) for v in recall],
                precision=[float(v) for v in precision],
            )
        )
        if ap is None:
            logger.warning(f"Class {class_id} has no ground truth and no detections; left out of mAP")
    mean_ap = mean_average_precision([r.ap for r in results])
    return EvalReport(
        classes=results,
        mean_ap=mean_ap,
        iou_threshold=iou_threshold,
        interpolation=interpolation,
        score_floor=score_floor,
        metadata=dict(metadata or {}),
    )


def predict_all(predict: Predictor, scenes: Sequence[Scene], *, workers: int = 1) -> list[list[Detection]]:
    """Run ``predict`` on every scene; results keep scene order whatever the worker count."""
    if workers <= 1 or len(scenes) < 2:
        return [predict(scene.image) for scene in scenes]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # Precision is a context variable; each task runs in a copy of the caller's context.
        futures = [pool.submit(contextvars.copy_context().run, predict, scene.image) for scene in scenes]
        return [f.result() for f in futures]


def evaluate_model(
    predict: Predictor,
    scenes: Sequence[Scene],
    class_ids: Sequence[int],
    *,
    workers: int = 1,
    **options: Any,
) -> EvalReport:
    """Predict every scene and score the detections; ``options`` go to :func:`evaluate_detections`."""
    with performance_context("evaluate_model", scenes=len(scenes), classes=len(class_ids)):
        predictions = predict_all(predict, scenes, workers=workers)
        report = evaluate_detections(predictions, scenes, class_ids, **options)
    logger.info(f"mAP@{report.iou_threshold:g} = {report.mean_ap:.4f} over {len(class_ids)} classes")
    return report
