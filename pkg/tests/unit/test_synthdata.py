"""
Unit tests for the synthetic benchmark: PRNG, class catalogue, rendering,
episode sampling, dumps and the calibration oracle.
"""

from pathlib import Path

import numpy as np
import pytest

from splurge_context_transformer.exceptions import (
    SplurgeContextTransformerFileError,
    SplurgeContextTransformerParameterError,
)
from splurge_context_transformer.synthdata import (
    ANNOTATIONS_FILE,
    MAX_OBJECTS,
    PERTURBATION_RADIUS,
    Benchmark,
    EpisodeSpec,
    Xoshiro256StarStar,
    build_source_scenes,
    centroid_oracle_accuracy,
    color_distance,
    derive_seed,
    dump_scenes,
    flip_scene,
    glyph_mask,
    load_annotations,
    render_scene,
    sample_episode,
    sample_test_scenes,
    sample_training_scenes,
)


@pytest.mark.unit
class TestRandomStreams:
    """Counter-based seeding and the xoshiro generator."""

    def test_derive_seed_is_deterministic_and_path_sensitive(self) -> None:
        assert derive_seed(7, 1, 2, 3) == derive_seed(7, 1, 2, 3)
        assert derive_seed(7, 1, 2, 3) != derive_seed(7, 1, 3, 2)
        assert derive_seed(7, 1) != derive_seed(8, 1)

    def test_same_seed_same_stream(self) -> None:
        a, b = Xoshiro256StarStar(42), Xoshiro256StarStar(42)
        assert [a.next_u64() for _ in range(8)] == [b.next_u64() for _ in range(8)]

    def test_draw_ranges(self) -> None:
        rng = Xoshiro256StarStar(3)
        floats = [rng.random() for _ in range(500)]
        assert min(floats) >= 0.0
        assert max(floats) < 1.0
        assert set(rng.integers(4) for _ in range(200)) == {0, 1, 2, 3}
        assert sorted(rng.permutation(6)) == list(range(6))
        picked = rng.sample(range(10), 4)
        assert len(set(picked)) == 4

    def test_integers_rejects_empty_range(self) -> None:
        with pytest.raises(SplurgeContextTransformerParameterError):
            Xoshiro256StarStar(1).integers(0)


@pytest.mark.unit
class TestBenchmarkCatalogue:
    """Class layout of the default benchmark."""

    def test_ids_are_disjoint_and_dense(self, benchmark: Benchmark) -> None:
        assert [c.class_id for c in benchmark.source] == list(range(12))
        assert [c.class_id for c in benchmark.target] == [12, 13, 14, 15]
        assert all(c.domain == "source" for c in benchmark.source)
        assert all(c.domain == "target" for c in benchmark.target)

    def test_confusion_groups_differ_only_by_context(self, benchmark: Benchmark) -> None:
        groups = benchmark.confusion_groups()
        assert sorted(groups) == [0, 1]
        for members in groups.values():
            a, b = members
            assert a.shape == b.shape
            assert color_distance(a.color, b.color) < PERTURBATION_RADIUS
            assert a.context_glyph is not None and b.context_glyph is not None
            assert a.context_glyph.shape != b.context_glyph.shape


@pytest.mark.unit
class TestRendering:
    """Scene rendering."""

    def test_render_is_deterministic(self, benchmark: Benchmark) -> None:
        draws = [benchmark.source[0], benchmark.source[3]]
        first, second = render_scene(draws, 99), render_scene(draws, 99)
        np.testing.assert_array_equal(first.image, second.image)
        assert first.annotations == second.annotations

    def test_image_is_read_only_and_in_range(self, benchmark: Benchmark) -> None:
        scene = render_scene([benchmark.source[2]], 5)
        assert scene.image.shape == (64, 64, 3)
        assert not scene.image.flags.writeable
        assert scene.image.min() >= 0.0
        assert scene.image.max() <= 1.0

    def test_boxes_inside_image(self, benchmark: Benchmark) -> None:
        scene = render_scene(list(benchmark.source[:3]), 11)
        boxes = scene.boxes
        assert boxes.shape == (3, 4)
        assert np.all(boxes[:, :2] - boxes[:, 2:] / 2 >= 0.0)
        assert np.all(boxes[:, :2] + boxes[:, 2:] / 2 <= 1.0)
        np.testing.assert_array_equal(scene.labels, [0, 1, 2])

    def test_target_scene_carries_unlabeled_context(self, benchmark: Benchmark) -> None:
        spec = benchmark.target[0]
        scene = render_scene([spec, spec], 21)
        assert scene.domain == "target"
        assert len(scene.context) == 1
        assert scene.context[0].for_class == spec.class_id
        assert scene.context[0].shape == spec.context_glyph.shape
        assert set(scene.labels.tolist()) == {spec.class_id}

    def test_context_can_be_left_unpainted(self, benchmark: Benchmark) -> None:
        spec = benchmark.target[2]
        painted = render_scene([spec], 8)
        bare = render_scene([spec], 8, render_context=False)
        assert painted.annotations == bare.annotations
        assert painted.context == bare.context
        assert not np.array_equal(painted.image, bare.image)

    def test_flip_twice_is_identity(self, benchmark: Benchmark) -> None:
        scene = render_scene([benchmark.target[1]], 4)
        twice = flip_scene(flip_scene(scene))
        np.testing.assert_array_equal(twice.image, scene.image)
        np.testing.assert_allclose(twice.boxes, scene.boxes)

    def test_empty_draws_rejected(self) -> None:
        with pytest.raises(SplurgeContextTransformerParameterError):
            render_scene([], 1)

    def test_unknown_glyph_shape(self) -> None:
        with pytest.raises(SplurgeContextTransformerParameterError):
            glyph_mask("hexagon", 32, 32, 10, 0.0, 64)

    @pytest.mark.parametrize("shape", ["circle", "square", "triangle", "cross", "bar", "ring"])
    def test_glyph_masks_are_nonempty_and_centered(self, shape: str) -> None:
        mask = glyph_mask(shape, 32.0, 32.0, 20.0, 0.0, 64)
        ys, xs = np.nonzero(mask)
        assert mask.sum() > 20
        assert abs(xs.mean() + 0.5 - 32.0) < 2.0


@pytest.mark.unit
class TestEpisodes:
    """Few-shot episode sampling."""

    def test_training_scenes_ordered_by_class(self, benchmark: Benchmark) -> None:
        scenes = sample_training_scenes(benchmark.target, 2, seed=5)
        assert len(scenes) == 8
        for index, scene in enumerate(scenes):
            expected = benchmark.target[index // 2].class_id
            assert set(scene.labels.tolist()) == {expected}
            assert 1 <= len(scene.annotations) <= MAX_OBJECTS["target"]

    def test_trials_draw_different_shots(self, benchmark: Benchmark) -> None:
        first = sample_training_scenes(benchmark.target, 1, seed=5, trial=1)
        second = sample_training_scenes(benchmark.target, 1, seed=5, trial=2)
        assert any(a.seed != b.seed for a, b in zip(first, second, strict=True))

    def test_parallel_rendering_is_identical(self, benchmark: Benchmark) -> None:
        serial = sample_training_scenes(benchmark.target, 1, seed=3)
        threaded = sample_training_scenes(benchmark.target, 1, seed=3, workers=3)
        for a, b in zip(serial, threaded, strict=True):
            np.testing.assert_array_equal(a.image, b.image)

    def test_zero_shots_rejected(self, benchmark: Benchmark) -> None:
        with pytest.raises(SplurgeContextTransformerParameterError):
            sample_training_scenes(benchmark.target, 0, seed=1)

    def test_test_set_is_fixed_per_family(self, benchmark: Benchmark) -> None:
        spec_a = EpisodeSpec(shots=1, classes=benchmark.target, seed=1, trial=1, test_scenes=5)
        spec_b = EpisodeSpec(shots=3, classes=benchmark.target, seed=9, trial=4, test_scenes=5)
        test_a = sample_episode(spec_a).test
        test_b = sample_episode(spec_b).test
        assert [s.seed for s in test_a] == [s.seed for s in test_b]
        other = sample_test_scenes(benchmark.target[:2], 5)
        assert [s.seed for s in other] != [s.seed for s in test_a]

    def test_source_scenes_use_source_classes(self, benchmark: Benchmark) -> None:
        scenes = build_source_scenes(benchmark.source, 6, seed=2)
        assert len(scenes) == 6
        assert all(s.domain == "source" for s in scenes)
        assert all(0 <= label < 12 for s in scenes for label in s.labels)


@pytest.mark.unit
class TestDumps:
    """Image and annotation dumps."""

    def test_dump_and_reload(self, benchmark: Benchmark, temp_dir: Path) -> None:
        scenes = sample_training_scenes(benchmark.target, 1, seed=1)
        path = dump_scenes(scenes, temp_dir / "episode", prefix="train")
        assert path.name == ANNOTATIONS_FILE
        records = load_annotations(path)
        assert len(records) == len(scenes)
        first_image = temp_dir / "episode" / records[0]["image"]
        assert first_image.read_bytes().startswith(b"P6\n64 64\n255\n")
        assert records[0]["objects"][0]["class"] == benchmark.target[0].class_id

    def test_bad_record_raises_file_error(self, temp_dir: Path) -> None:
        path = temp_dir / ANNOTATIONS_FILE
        path.write_text('{"scene_id": 0}\nnot json\n', encoding="utf-8")
        with pytest.raises(SplurgeContextTransformerFileError, match="line 2"):
            load_annotations(path)


@pytest.mark.unit
class TestCalibrationOracle:
    """Nearest-centroid confusion check."""

    def test_reports_group_accuracy(self, benchmark: Benchmark) -> None:
        scenes = sample_training_scenes(benchmark.target, 4, seed=12)
        result = centroid_oracle_accuracy(scenes, benchmark.target)
        assert result.samples > 0
        assert 0.0 <= result.accuracy <= 1.0
        assert sorted(result.within_group) == [0, 1]

    def test_glyphs_alone_stay_confusable(self, benchmark: Benchmark) -> None:
        scenes = sample_test_scenes(benchmark.target, 600)
        result = centroid_oracle_accuracy(scenes, benchmark.target)
        assert result.samples >= 200
        assert result.accuracy <= 0.65

    @pytest.mark.slow
    def test_without_context_groups_sit_near_chance(self, benchmark: Benchmark) -> None:
        # Pairs of consecutive scenes share a class so every class lands on both halves.
        classes = benchmark.target
        scenes = [
            render_scene([classes[(index // 2) % len(classes)]], derive_seed(77, index), render_context=False)
            for index in range(600)
        ]
        result = centroid_oracle_accuracy(scenes, benchmark.target)
        assert sorted(result.within_group) == [0, 1]
        for accuracy in result.within_group.values():
            assert abs(accuracy - 0.5) <= 0.10

    @pytest.mark.slow
    def test_source_scenes_stay_in_bounds_with_uniform_classes(self, benchmark: Benchmark) -> None:
        scenes = build_source_scenes(benchmark.source, 1000, seed=31)
        boxes = np.array([ann.box for scene in scenes for ann in scene.annotations])
        assert np.all(boxes[:, 2:] > 0.0)
        assert np.all(boxes[:, :2] - boxes[:, 2:] / 2 >= -1e-9)
        assert np.all(boxes[:, :2] + boxes[:, 2:] / 2 <= 1.0 + 1e-9)

        counts = np.bincount(
            [ann.class_id for scene in scenes for ann in scene.annotations],
            minlength=max(spec.class_id for spec in benchmark.source) + 1,
        )[[spec.class_id for spec in benchmark.source]]
        total = int(counts.sum())
        p = 1.0 / len(benchmark.source)
        spread = 4.0 * np.sqrt(total * p * (1.0 - p))
        assert np.all(np.abs(counts - total * p) <= spread)

    def test_missing_class_raises(self, benchmark: Benchmark) -> None:
        scenes = sample_training_scenes(benchmark.target[:1], 2, seed=12)
        with pytest.raises(SplurgeContextTransformerParameterError):
            centroid_oracle_accuracy(scenes, benchmark.target)
