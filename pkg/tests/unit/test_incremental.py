"""
Unit tests for incremental detection: the residual adapter, joint softmax,
replay train set and checkpoint restore.
"""

from pathlib import Path

import numpy as np
import pytest

from splurge_context_transformer.context_transformer import (
    ContextTransformerFlags,
    SourceScoreSet,
    forward,
)
from splurge_context_transformer.detector import Detector, TrainSettings, detection_scores
from splurge_context_transformer.exceptions import (
    SplurgeContextTransformerCheckpointError,
    SplurgeContextTransformerDimensionError,
    SplurgeContextTransformerParameterError,
)
from splurge_context_transformer.incremental import (
    ADAPTER_NAME,
    IncrementalModel,
    build_incremental_trainset,
    fine_tune_incremental,
    incremental_forward,
    init_incremental_params,
)
from splurge_context_transformer.numerics import Tensor, load_checkpoint
from splurge_context_transformer.synthdata import Benchmark, sample_training_scenes

SOURCE_IDS = tuple(range(12))
TARGET_IDS = (12, 13, 14, 15)
GRIDS = ((8, 8), (4, 4), (2, 2))


def _scores(rng: np.random.Generator, classes: int = 12) -> SourceScoreSet:
    per_scale = [Tensor(rng.normal(size=(h, w, 3 * classes))) for h, w in GRIDS]
    return SourceScoreSet.from_scale_tensors(per_scale, [3, 3, 3], classes)


@pytest.mark.unit
class TestJointClassifier:
    """Adapter and joint logits."""

    def test_zero_adapter_leaves_source_scores_untouched(self, rng: np.random.Generator) -> None:
        scores = _scores(rng)
        out = incremental_forward(scores, init_incremental_params(12, 4, seed=3))
        np.testing.assert_array_equal(out.source_logits.numpy(), scores.matrix.numpy())

    def test_joint_layout_and_softmax(self, rng: np.random.Generator) -> None:
        scores = _scores(rng)
        params = init_incremental_params(12, 4, seed=3)
        params.adapter.assign(rng.normal(0.0, 0.1, (12, 12)))
        out = incremental_forward(scores, params)
        assert out.logits.shape == (252, 16)
        np.testing.assert_allclose(out.probabilities.numpy().sum(axis=1), 1.0)
        np.testing.assert_allclose(out.logits.numpy()[:, 12:], forward(scores, params.context).logits.numpy())
        p = scores.matrix.numpy()
        np.testing.assert_allclose(out.logits.numpy()[:, :12], p + p @ params.adapter.numpy())

    def test_parameter_names_and_count(self) -> None:
        params = init_incremental_params(12, 4)
        named = params.named_parameters()
        assert ADAPTER_NAME in named
        assert params.joint_classes == 16
        assert params.count() == 144 + params.context.count()

    def test_per_scale_theta_rejected(self) -> None:
        with pytest.raises(SplurgeContextTransformerParameterError):
            init_incremental_params(12, 4, ContextTransformerFlags(theta="per-scale"))

    def test_score_width_mismatch(self, rng: np.random.Generator) -> None:
        with pytest.raises(SplurgeContextTransformerDimensionError):
            incremental_forward(_scores(rng, classes=5), init_incremental_params(12, 4))


@pytest.mark.unit
class TestReplayTrainset:
    """Source replay mixed with the target episode."""

    def test_counts_and_determinism(self, benchmark: Benchmark) -> None:
        target = sample_training_scenes(benchmark.target, 1, seed=4)
        first = build_incremental_trainset(benchmark.source, target, 1, seed=9)
        second = build_incremental_trainset(benchmark.source, target, 1, seed=9)
        assert len(first) == len(benchmark.source) + len(target)
        assert [s.seed for s in first] == [s.seed for s in second]
        assert sum(s.domain == "target" for s in first) == len(target)

    def test_zero_shots_rejected(self, benchmark: Benchmark) -> None:
        with pytest.raises(SplurgeContextTransformerParameterError):
            build_incremental_trainset(benchmark.source, [], 0, seed=1)


@pytest.mark.unit
class TestIncrementalModel:
    """Model wrapper, prediction and checkpoints."""

    def test_forward_and_predict(self) -> None:
        model = IncrementalModel.create(Detector.create(SOURCE_IDS, seed=2), TARGET_IDS, seed=2)
        assert model.class_ids == SOURCE_IDS + TARGET_IDS
        image = np.random.default_rng(0).uniform(size=(64, 64, 3))
        out = model.forward(image, inference=True)
        assert out.class_logits.shape == (252, 16)
        for det in model.predict(image, score_threshold=0.0):
            assert det.class_id in model.class_ids

    def test_adapter_must_match_detector(self) -> None:
        detector = Detector.create(SOURCE_IDS)
        with pytest.raises(SplurgeContextTransformerDimensionError):
            IncrementalModel(detector, init_incremental_params(5, 4), TARGET_IDS)

    def test_checkpoint_round_trip(self, rng: np.random.Generator) -> None:
        model = IncrementalModel.create(Detector.create(SOURCE_IDS, seed=2), TARGET_IDS, seed=2)
        model.params.adapter.assign(rng.normal(0.0, 0.1, (12, 12)))
        model.global_step = 7
        restored = IncrementalModel.from_checkpoint(model.to_checkpoint({"stage": "incremental"}), seed=99)
        assert restored.global_step == 7
        assert restored.target_class_ids == TARGET_IDS
        for name, tensor in model.named_parameters().items():
            np.testing.assert_array_equal(restored.named_parameters()[name].numpy(), tensor.numpy())

    @pytest.mark.slow
    def test_masking_target_columns_recovers_source_decisions(
        self, tiny_source_checkpoint: Path, benchmark: Benchmark
    ) -> None:
        detector = Detector.from_checkpoint(load_checkpoint(tiny_source_checkpoint))
        model = IncrementalModel.create(detector, TARGET_IDS, seed=5)
        source_count = len(detector.source_class_ids)
        for scene in sample_training_scenes(benchmark.source[:3], 1, seed=8):
            joint = model.forward(scene.image, inference=True).class_logits.numpy()
            source = detector.forward(scene.image, stage="source", inference=True).class_logits.numpy()
            masked = joint.copy()
            masked[:, source_count:] = -np.inf
            np.testing.assert_array_equal(masked.argmax(axis=1), source.argmax(axis=1))
            np.testing.assert_allclose(
                detection_scores(np.zeros(len(masked)), masked)[:, :source_count],
                detection_scores(np.zeros(len(source)), source),
                atol=1e-12,
            )

    def test_plain_detector_checkpoint_rejected(self) -> None:
        with pytest.raises(SplurgeContextTransformerCheckpointError):
            IncrementalModel.from_checkpoint(Detector.create(SOURCE_IDS).to_checkpoint())

    @pytest.mark.slow
    def test_fine_tuning_moves_adapter(self, benchmark: Benchmark) -> None:
        model = IncrementalModel.create(Detector.create(SOURCE_IDS, seed=2), TARGET_IDS, seed=2)
        target = sample_training_scenes(benchmark.target, 1, seed=4)
        scenes = build_incremental_trainset(benchmark.source, target, 1, seed=4)
        settings = TrainSettings(steps=2, learning_rate=1e-2, batch_size=2, log_every=0, seed=1)
        result = fine_tune_incremental(model, scenes, settings)
        assert len(result.losses) + result.skipped == 2
        if result.losses:
            assert np.any(model.params.adapter.numpy() != 0.0)
