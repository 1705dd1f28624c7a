"""
Unit tests for VOC-style evaluation: AP, mAP, the confusion breakdown and
report serialization.
"""

import numpy as np
import pytest

from splurge_context_transformer.anchors import Box, iou
from splurge_context_transformer.detector import Detection
from splurge_context_transformer.evaluation import (
    ConfusionTriple,
    EvalReport,
    ScoredBox,
    average_precision,
    confusion_breakdown,
    evaluate_detections,
    evaluate_model,
    mean_average_precision,
)
from splurge_context_transformer.exceptions import (
    SplurgeContextTransformerParameterError,
    SplurgeContextTransformerValueError,
)
from splurge_context_transformer.synthdata import Benchmark, Scene, sample_test_scenes

GT = Box(0.5, 0.5, 0.2, 0.2)
ELSEWHERE = Box(0.1, 0.1, 0.1, 0.1)


def _perfect_predictor(scenes: list[Scene]):
    by_image = {id(s.image): [Detection(a.box, a.class_id, 0.99) for a in s.annotations] for s in scenes}
    return lambda image: by_image[id(image)]


@pytest.mark.unit
class TestAveragePrecision:
    """Per-class AP."""

    def test_single_exact_detection(self) -> None:
        assert average_precision([ScoredBox(0, GT, 0.9)], {0: [GT]}) == pytest.approx(1.0)

    def test_true_positive_ranked_first(self) -> None:
        dets = [ScoredBox(0, GT, 0.9), ScoredBox(0, ELSEWHERE, 0.5)]
        assert average_precision(dets, {0: [GT]}) == pytest.approx(1.0)

    def test_false_positive_ranked_first(self) -> None:
        dets = [ScoredBox(0, ELSEWHERE, 0.9), ScoredBox(0, GT, 0.5)]
        assert average_precision(dets, {0: [GT]}) == pytest.approx(0.5)

    def test_duplicate_detection_is_false_positive(self) -> None:
        dets = [ScoredBox(0, GT, 0.9), ScoredBox(0, GT, 0.8)]
        assert average_precision(dets, {0: [GT, ELSEWHERE]}) == pytest.approx(0.5)

    def test_eleven_point_interpolation(self) -> None:
        dets = [ScoredBox(0, ELSEWHERE, 0.9), ScoredBox(0, GT, 0.5)]
        assert average_precision(dets, {0: [GT]}, interpolation="11-point") == pytest.approx(0.5)

    def test_no_ground_truth(self) -> None:
        assert average_precision([], {}) is None
        assert average_precision([ScoredBox(0, GT, 0.9)], {}) == 0.0

    def test_unknown_interpolation(self) -> None:
        with pytest.raises(SplurgeContextTransformerParameterError):
            average_precision([], {0: [GT]}, interpolation="spline")

    def test_adding_top_true_positive_never_lowers_ap(self, rng: np.random.Generator) -> None:
        gts = {0: [Box(0.2 + 0.15 * i, 0.5, 0.1, 0.1) for i in range(4)]}
        for _ in range(20):
            dets = [
                ScoredBox(0, Box(*rng.uniform(0.2, 0.8, 2), 0.1, 0.1), float(rng.uniform(0.1, 0.8)))
                for _ in range(6)
            ]
            before = average_precision(dets, gts)
            after = average_precision([*dets, ScoredBox(0, gts[0][0], 0.95)], gts)
            assert after >= before - 1e-12

    def test_mean_skips_none(self) -> None:
        assert mean_average_precision({1: 1.0, 2: None, 3: 0.5}) == pytest.approx(0.75)
        assert np.isnan(mean_average_precision([None, None]))


@pytest.mark.unit
class TestConfusionBreakdown:
    """Correct, confused and missed decomposition."""

    def test_all_correct(self) -> None:
        counts = confusion_breakdown({0: [Detection(GT, 12, 0.9)]}, [(0, GT, 12)])
        assert counts[12].percentages() == (100.0, 0.0, 0.0)

    def test_sibling_class_is_confusion(self) -> None:
        counts = confusion_breakdown({0: [Detection(GT, 13, 0.9)]}, [(0, GT, 12)])
        assert counts[12].percentages() == (0.0, 100.0, 0.0)

    def test_low_score_or_far_detection_is_miss(self) -> None:
        predictions = {0: [Detection(GT, 12, 0.1), Detection(ELSEWHERE, 12, 0.9)]}
        assert confusion_breakdown(predictions, [(0, GT, 12)])[12] == ConfusionTriple(missed=1)

    def test_matches_brute_force_assignment(self, rng: np.random.Generator) -> None:
        gts = [
            (int(rng.integers(3)), Box(*rng.uniform(0.3, 0.7, 2), 0.2, 0.2), int(rng.integers(12, 14)))
            for _ in range(10)
        ]
        predictions: dict[int, list[Detection]] = {}
        for scene_id, box, _ in gts:
            for _ in range(3):
                jitter = Box(box.cx + rng.normal(0, 0.05), box.cy + rng.normal(0, 0.05), 0.2, 0.2)
                det = Detection(jitter, int(rng.integers(12, 14)), float(rng.uniform()))
                predictions.setdefault(scene_id, []).append(det)

        expected: dict[int, list[int]] = {}
        for scene_id, box, class_id in gts:
            eligible = [d for d in predictions.get(scene_id, []) if d.score >= 0.3 and iou(d.box, box) >= 0.5]
            slot = expected.setdefault(class_id, [0, 0, 0])
            if not eligible:
                slot[2] += 1
            elif max(eligible, key=lambda d: d.score).class_id == class_id:
                slot[0] += 1
            else:
                slot[1] += 1

        result = confusion_breakdown(predictions, gts)
        assert {cid: [t.correct, t.confused, t.missed] for cid, t in result.items()} == expected
        for triple in result.values():
            assert sum(triple.percentages()) == pytest.approx(100.0)


@pytest.mark.unit
class TestEvaluationReports:
    """Whole-report evaluation."""

    def test_perfect_predictor_scores_one(self, benchmark: Benchmark) -> None:
        scenes = list(sample_test_scenes(benchmark.target, 6))
        class_ids = [c.class_id for c in benchmark.target]
        report = evaluate_model(_perfect_predictor(scenes), scenes, class_ids)
        present = {a.class_id for s in scenes for a in s.annotations}
        for result in report.classes:
            if result.class_id in present:
                assert result.ap == pytest.approx(1.0)
                assert result.confusion.missed == 0
            else:
                assert result.ap is None
        assert report.mean_ap == pytest.approx(1.0)

    def test_evaluation_is_deterministic(self, benchmark: Benchmark) -> None:
        scenes = list(sample_test_scenes(benchmark.target, 4))
        class_ids = [c.class_id for c in benchmark.target]
        first = evaluate_model(_perfect_predictor(scenes), scenes, class_ids, workers=2)
        second = evaluate_model(_perfect_predictor(scenes), scenes, class_ids)
        assert first.to_json() == second.to_json()

    def test_json_round_trip(self) -> None:
        scene = Scene(np.zeros((4, 4, 3)), (), seed=0, domain="target")
        report = evaluate_detections([[Detection(GT, 12, 0.9)]], [scene], [12, 13], metadata={"variant": "full"})
        restored = EvalReport.from_json(report.to_json())
        assert restored.to_json() == report.to_json()
        assert restored.per_class_ap == {12: 0.0, 13: None}
        assert restored.skipped_classes == [13]
        assert restored.metadata == {"variant": "full"}

    def test_mismatched_prediction_count(self) -> None:
        with pytest.raises(SplurgeContextTransformerParameterError):
            evaluate_detections([[], []], [], [12])

    def test_from_json_rejects_garbage(self) -> None:
        with pytest.raises(SplurgeContextTransformerValueError):
            EvalReport.from_json("{not json")
