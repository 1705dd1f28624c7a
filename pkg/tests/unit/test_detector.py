"""
Unit tests for the detector package: backbone, heads, multibox loss,
transfer variants, training loop and checkpoint restore.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from splurge_context_transformer.anchors import Box, PriorSpec, generate_priors, match_priors
from splurge_context_transformer.context_transformer import count_extra_params
from splurge_context_transformer.detector import (
    ConvLayer,
    Detector,
    LossTerms,
    MatchedTargets,
    TrainingSample,
    TrainSettings,
    TransferConfig,
    Variant,
    check_provenance,
    combine_losses,
    count_baseline_params,
    decode_detections,
    detection_scores,
    fine_tune,
    get_variant,
    hard_negative_mining,
    heads_forward,
    multibox_loss,
    multibox_terms,
    prepare_samples,
    prepare_targets,
    train_detector,
)
from splurge_context_transformer.exceptions import (
    SplurgeContextTransformerCheckpointError,
    SplurgeContextTransformerConsistencyError,
    SplurgeContextTransformerDimensionError,
    SplurgeContextTransformerNumericalError,
    SplurgeContextTransformerParameterError,
)
from splurge_context_transformer.numerics import Tensor, finite_diff_check, mul, sum_all
from splurge_context_transformer.synthdata import Benchmark, sample_training_scenes

SOURCE_IDS = tuple(range(12))
TARGET_IDS = (12, 13, 14, 15)


@pytest.fixture(scope="module")
def source_detector() -> Detector:
    return Detector.create(SOURCE_IDS, seed=1)


def _image(seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(size=(64, 64, 3))


@dataclass
class _Quadratic:
    """Minimal trainable model for exercising the training loop without a detector."""

    weight: Tensor
    global_step: int = 0


def _dummy_samples(count: int) -> list[TrainingSample]:
    empty = MatchedTargets(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros((0, 4)), np.zeros((1, 1)))
    return [TrainingSample(np.zeros((1, 1, 3)), empty) for _ in range(count)]


def _cell_conv(feature: np.ndarray, weight: np.ndarray, bias: np.ndarray, i: int, j: int) -> np.ndarray:
    """3 x 3 same-padded convolution evaluated at one cell, by direct summation."""
    out = bias.astype(np.float64).copy()
    for di in range(-1, 2):
        for dj in range(-1, 2):
            r, c = i + di, j + dj
            if 0 <= r < feature.shape[0] and 0 <= c < feature.shape[1]:
                for ch in range(feature.shape[2]):
                    out += feature[r, c, ch] * weight[di + 1, dj + 1, ch, :]
    return out


@pytest.mark.unit
class TestForwardShapes:
    """Backbone taps and head layout."""

    def test_feature_grids_match_priors(self, source_detector: Detector) -> None:
        assert source_detector.backbone.feature_grids() == ((8, 8), (4, 4), (2, 2))

    def test_source_forward_shapes(self, source_detector: Detector) -> None:
        out = source_detector.forward(_image(), stage="source")
        assert out.offsets.shape == (252, 4)
        assert out.bg_logits.shape == (252, 1)
        assert out.class_logits.shape == (252, 12)

    @pytest.mark.parametrize(
        ("scale", "i", "j", "anchor"),
        [(0, 0, 0, 0), (0, 3, 5, 2), (0, 7, 7, 1), (1, 2, 1, 1), (1, 0, 3, 2), (2, 1, 0, 0)],
    )
    def test_rows_match_direct_convolution_at_cell(
        self, source_detector: Detector, scale: int, i: int, j: int, anchor: int
    ) -> None:
        draw = np.random.default_rng(scale * 100 + i * 10 + j)
        features = [Tensor(draw.normal(size=(h, w, 32))) for h, w in source_detector.backbone.feature_grids()]
        out = heads_forward(features, source_detector.heads, source_detector.priors)
        assert out.scores is not None
        grids, ratios = source_detector.heads.grids, source_detector.heads.ratios_per_scale
        row = sum(h * w * m for (h, w), m in zip(grids[:scale], ratios[:scale], strict=True))
        row += (i * grids[scale][1] + j) * ratios[scale] + anchor

        head, feature = source_detector.heads.scales[scale], features[scale].numpy()
        classes = source_detector.heads.source_classes

        def expected(layer: ConvLayer, width: int) -> np.ndarray:
            full = _cell_conv(feature, layer.weight.numpy(), layer.bias.numpy(), i, j)
            return full[anchor * width : (anchor + 1) * width]

        np.testing.assert_allclose(out.scores.matrix.numpy()[row], expected(head.source_obj, classes), atol=1e-10)
        np.testing.assert_allclose(out.offsets.numpy()[row], expected(head.bbox, 4), atol=1e-10)
        np.testing.assert_allclose(out.bg_logits.numpy()[row], expected(head.bg, 1), atol=1e-10)

    def test_wrong_image_size(self, source_detector: Detector) -> None:
        with pytest.raises(SplurgeContextTransformerDimensionError):
            source_detector.forward(np.zeros((32, 32, 3)), stage="source")

    def test_provenance_mismatch(self) -> None:
        with pytest.raises(SplurgeContextTransformerConsistencyError):
            check_provenance(((8, 8), (4, 4), (1, 1)), (3, 3, 3), generate_priors())

    def test_target_forward_needs_pathway(self) -> None:
        with pytest.raises(SplurgeContextTransformerParameterError):
            Detector.create(SOURCE_IDS).forward(_image())


@pytest.mark.unit
class TestTransferVariants:
    """Target pathways and their parameter budgets."""

    def test_baseline_adds_conv_head(self) -> None:
        detector = Detector.create(SOURCE_IDS)
        detector.attach_target("baseline", TARGET_IDS)
        assert detector.extra_parameter_count() == count_baseline_params(4, (3, 3, 3)) == 10_404
        assert detector.forward(_image()).class_logits.shape == (252, 4)

    def test_full_adds_context_weights(self) -> None:
        detector = Detector.create(SOURCE_IDS)
        detector.attach_target("full", TARGET_IDS)
        assert detector.extra_parameter_count() == count_extra_params(12, 4) == 624

    def test_source_obj_only_uses_theta_without_context(self) -> None:
        detector = Detector.create(SOURCE_IDS)
        detector.attach_target("source-obj-only", TARGET_IDS)
        out = detector.forward(_image())
        assert out.context is None
        assert detector.extra_parameter_count() == 48

    def test_unload_skips_module_at_inference(self) -> None:
        detector = Detector.create(SOURCE_IDS)
        detector.attach_target("unload", TARGET_IDS)
        assert detector.forward(_image()).context.affinity is not None
        assert detector.forward(_image(), inference=True).context.affinity is None

    def test_reinit_replaces_source_obj(self) -> None:
        detector = Detector.create(SOURCE_IDS, seed=2)
        before = detector.heads.scales[0].source_obj.weight.numpy()
        detector.attach_target("transformer-only", TARGET_IDS, seed=9)
        assert not np.array_equal(before, detector.heads.scales[0].source_obj.weight.numpy())

    @pytest.mark.parametrize(
        "transfer",
        [
            TransferConfig(bbox="discard"),
            TransferConfig(source_obj="discard"),
            TransferConfig(target_head="conv"),
            TransferConfig(bg="sideways"),
        ],
    )
    def test_invalid_transfer_configs(self, transfer: TransferConfig) -> None:
        with pytest.raises(SplurgeContextTransformerParameterError):
            transfer.validate()

    def test_unknown_variant(self) -> None:
        with pytest.raises(SplurgeContextTransformerParameterError):
            get_variant("everything")


@pytest.mark.unit
class TestMultiboxLoss:
    """Matching targets, mining and loss normalization."""

    def test_no_positives_gives_none(self) -> None:
        priors = generate_priors()
        targets = prepare_targets(match_priors(np.zeros((0, 4)), priors), np.zeros((0, 4)), [], priors)
        offsets, bg, cls = Tensor(np.zeros((252, 4))), Tensor(np.zeros((252, 1))), Tensor(np.zeros((252, 3)))
        assert multibox_terms(offsets, bg, cls, targets) is None
        assert multibox_loss(offsets, bg, cls, targets) is None

    def test_hard_negative_budget_and_ties(self) -> None:
        losses = np.array([5.0, 1.0, 1.0, 3.0, 0.5, 1.0])
        positives = np.array([True, False, False, False, False, False])
        np.testing.assert_array_equal(hard_negative_mining(losses, positives, ratio=3), [3, 1, 2])
        assert hard_negative_mining(losses, positives, ratio=10).size == 5

    def test_combine_normalizes_by_positive_count(self) -> None:
        one = LossTerms(Tensor(2.0), Tensor(4.0), Tensor(6.0), 1)
        three = LossTerms(Tensor(1.0), Tensor(1.0), Tensor(1.0), 3)
        combined = combine_losses([one, None, three])
        assert combined is not None
        assert combined.num_positives == 4
        assert combined.value == pytest.approx(15.0 / 4)
        assert combined.loc == pytest.approx(0.75)
        assert combine_losses([None, None]) is None

    def test_loss_gradients(self, rng: np.random.Generator) -> None:
        priors = generate_priors(PriorSpec.uniform([(2, 2), (1, 1)], ratios=[1.0, 2.0]))
        gt = np.array([[0.25, 0.25, 0.3, 0.3], [0.7, 0.6, 0.5, 0.6]])
        targets = prepare_targets(match_priors(gt, priors), gt, [1, 0], priors)
        offsets = Tensor(rng.normal(size=(10, 4)) * 0.3, requires_grad=True, name="offsets")
        bg = Tensor(rng.normal(size=(10, 1)), requires_grad=True, name="bg")
        cls = Tensor(rng.normal(size=(10, 3)), requires_grad=True, name="cls")
        report = finite_diff_check(lambda: multibox_loss(offsets, bg, cls, targets).total, [offsets, cls])
        assert report.passed, report.to_dict()

    def test_shape_disagreement(self) -> None:
        targets = MatchedTargets(np.array([0]), np.array([0]), np.zeros((1, 4)), np.ones((4, 1)))
        with pytest.raises(SplurgeContextTransformerDimensionError):
            multibox_terms(Tensor(np.zeros((4, 4))), Tensor(np.zeros((3, 1))), Tensor(np.zeros((4, 2))), targets)


@pytest.mark.unit
class TestDetectionDecoding:
    """Scores and per-class NMS."""

    def test_scores_are_objectness_times_softmax(self) -> None:
        scores = detection_scores(np.array([[0.0], [100.0]]), np.array([[0.0, 0.0], [50.0, 0.0]]))
        np.testing.assert_allclose(scores, [[0.25, 0.25], [1.0, 0.0]], atol=1e-12)

    def test_decode_keeps_confident_prior(self) -> None:
        priors = generate_priors()
        scores = np.zeros((252, 2))
        scores[81, 1] = 0.9
        scores[82, 1] = 0.5
        detections = decode_detections(np.zeros((252, 4)), scores, priors, (12, 13))
        assert detections[0].class_id == 13
        assert detections[0].score == pytest.approx(0.9)
        assert len(detections) == 1
        assert tuple(detections[0].box) == pytest.approx(tuple(Box(*priors.boxes[81])))

    def test_prediction_runs_end_to_end(self, source_detector: Detector) -> None:
        detections = source_detector.predict(_image(), stage="source", top_k=5)
        assert len(detections) <= 5
        assert all(d.class_id in SOURCE_IDS for d in detections)


@pytest.mark.unit
class TestTrainingLoop:
    """Generic training loop behavior."""

    def test_quadratic_loss_decreases_and_logs_metrics(self, temp_dir: Path) -> None:
        model = _Quadratic(Tensor(np.array([2.0, -1.5]), requires_grad=True, name="w"))

        def loss_fn(sample: TrainingSample, flipped: bool) -> LossTerms:
            value = sum_all(mul(model.weight, model.weight))
            return LossTerms(value, Tensor(0.0), Tensor(0.0), 1)

        settings = TrainSettings(
            steps=20, learning_rate=0.05, momentum=0.0, weight_decay=0.0, batch_size=1, log_every=0
        )
        metrics = temp_dir / "metrics.jsonl"
        result = train_detector(
            model,
            _dummy_samples(3),
            settings,
            stage="unit",
            parameters=[model.weight],
            loss_fn=loss_fn,
            metrics_path=metrics,
        )
        assert result.loss_decreased()
        assert model.global_step == 20
        assert len(metrics.read_text(encoding="utf-8").splitlines()) == 20

    def test_batches_without_positives_are_skipped(self) -> None:
        model = _Quadratic(Tensor(np.ones(1), requires_grad=True))
        settings = TrainSettings(steps=3, learning_rate=0.1, batch_size=2, log_every=0)
        result = train_detector(
            model, _dummy_samples(2), settings, stage="unit", parameters=[model.weight], loss_fn=lambda s, f: None
        )
        assert result.skipped == 3
        assert result.losses == []
        np.testing.assert_array_equal(model.weight.numpy(), [1.0])

    def test_non_finite_loss_raises(self) -> None:
        model = _Quadratic(Tensor(np.ones(1), requires_grad=True))

        def loss_fn(sample: TrainingSample, flipped: bool) -> LossTerms:
            return LossTerms(mul(model.weight, Tensor(np.array([np.nan]))), Tensor(0.0), Tensor(0.0), 1)

        settings = TrainSettings(steps=2, learning_rate=0.1, batch_size=1, log_every=0)
        with pytest.raises(SplurgeContextTransformerNumericalError) as exc_info:
            train_detector(model, _dummy_samples(1), settings, stage="unit", parameters=[model.weight], loss_fn=loss_fn)
        assert exc_info.value.details["step"] == 0

    @pytest.mark.parametrize("field", ["steps", "learning_rate", "batch_size"])
    def test_invalid_settings(self, field: str) -> None:
        values = {"steps": 1, "learning_rate": 0.1, "batch_size": 1}
        values[field] = 0
        with pytest.raises(SplurgeContextTransformerParameterError):
            TrainSettings(**values).validate()

    def test_scene_outside_class_list(self, benchmark: Benchmark) -> None:
        scenes = sample_training_scenes(benchmark.target[:1], 1, seed=3)
        with pytest.raises(SplurgeContextTransformerParameterError):
            prepare_samples(scenes, generate_priors(), SOURCE_IDS)


@pytest.mark.unit
@pytest.mark.slow
class TestFineTuning:
    """Fine-tuning a target pathway on real scenes."""

    def test_frozen_heads_stay_bit_identical(self, benchmark: Benchmark) -> None:
        detector = Detector.create(SOURCE_IDS, seed=4)
        frozen_variant = Variant("frozen-heads", TransferConfig(bbox="freeze", bg="freeze", backbone="freeze"))
        detector.attach_target(frozen_variant, TARGET_IDS, seed=4)
        frozen_before = [p.numpy() for p in detector.frozen_parameters()]
        theta_before = detector.context_params.theta[0].numpy()
        scenes = sample_training_scenes(benchmark.target, 1, seed=8)
        settings = TrainSettings(steps=2, learning_rate=1e-3, batch_size=2, log_every=0, seed=1)
        result = fine_tune(detector, scenes, settings)
        assert len(result.losses) + result.skipped == 2
        for before, after in zip(frozen_before, detector.frozen_parameters(), strict=True):
            np.testing.assert_array_equal(before, after.numpy())
        assert not np.array_equal(theta_before, detector.context_params.theta[0].numpy())


@pytest.mark.unit
class TestDetectorCheckpoint:
    """Persistence of a detector with its target pathway."""

    def test_round_trip_restores_predictions(self) -> None:
        detector = Detector.create(SOURCE_IDS, seed=5)
        detector.attach_target("full", TARGET_IDS, seed=5)
        detector.global_step = 17
        restored = Detector.from_checkpoint(detector.to_checkpoint({"stage": "target"}))
        assert restored.global_step == 17
        assert restored.variant.name == "full"
        image = _image(3)
        np.testing.assert_array_equal(
            detector.forward(image).class_logits.numpy(), restored.forward(image).class_logits.numpy()
        )

    def test_missing_parameter(self) -> None:
        detector = Detector.create(SOURCE_IDS)
        arrays = {name: t.numpy() for name, t in detector.named_parameters().items()}
        arrays.pop("backbone.stem1.weight")
        with pytest.raises(SplurgeContextTransformerCheckpointError, match="missing"):
            detector.load_arrays(arrays)

    def test_shape_mismatch(self) -> None:
        detector = Detector.create(SOURCE_IDS)
        arrays = {name: t.numpy() for name, t in detector.named_parameters().items()}
        arrays["backbone.stem1.bias"] = np.zeros(3)
        with pytest.raises(SplurgeContextTransformerCheckpointError, match="Shape mismatch"):
            detector.load_arrays(arrays)

    def test_incomplete_metadata(self) -> None:
        checkpoint = Detector.create(SOURCE_IDS).to_checkpoint()
        checkpoint.metadata.pop("prior_spec")
        with pytest.raises(SplurgeContextTransformerCheckpointError):
            Detector.from_checkpoint(checkpoint)
