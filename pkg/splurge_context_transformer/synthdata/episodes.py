"""
Few-shot episodes and source-domain datasets.

Training scenes for an episode contain only the class they are drawn for,
so an N-shot episode holds exactly N scenes per class. The test set of a
trial family depends only on the class list and a fixed test seed; two
trials of the same family therefore differ only in their training shots.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from ..exceptions import SplurgeContextTransformerParameterError, SplurgeContextTransformerPlacementError
from ..logging import configure_module_logging
from .classes import ClassSpec
from .render import DEFAULT_IMAGE_SIZE, Scene, render_scene
from .rng import Xoshiro256StarStar, derive_seed

# Module domains
DOMAINS = ["synthdata", "episodes", "sampling"]

__all__ = [
    "DEFAULT_TEST_SEED",
    "TEST_SCENES_PER_FAMILY",
    "MAX_OBJECTS",
    "EpisodeSpec",
    "Episode",
    "class_family_key",
    "sample_training_scenes",
    "sample_test_scenes",
    "sample_episode",
    "build_source_scenes",
]

DEFAULT_TEST_SEED = 0x5EED_7E57
TEST_SCENES_PER_FAMILY = 200

# Upper bound on annotated glyphs per scene; target glyphs each bring a context glyph.
MAX_OBJECTS = {"source": 3, "target": 2}

logger = configure_module_logging("synthdata.episodes")


@dataclass(frozen=True)
class EpisodeSpec:
    """An N-shot episode: ``shots`` training scenes for each class in ``classes``."""

    shots: int
    classes: tuple[ClassSpec, ...]
    seed: int
    trial: int = 1
    test_scenes: int = TEST_SCENES_PER_FAMILY
    test_seed: int = DEFAULT_TEST_SEED
    image_size: int = DEFAULT_IMAGE_SIZE


@dataclass(frozen=True)
class Episode:
    spec: EpisodeSpec
    train: tuple[Scene, ...]
    test: tuple[Scene, ...]


def class_family_key(classes: Sequence[ClassSpec]) -> int:
    """Seed component identifying a class list (order-sensitive)."""
    return derive_seed(len(classes), *(spec.class_id for spec in classes))


def _render_with_fallback(draws: list[ClassSpec], seed: int, image_size: int, scene_id: int) -> Scene:
    # Drop trailing objects until the layout fits; the first draw always stays.
    while True:
        try:
            return render_scene(draws, seed, image_size, scene_id=scene_id)
        except SplurgeContextTransformerPlacementError:
            if len(draws) == 1:
                raise
            logger.debug(f"Scene {scene_id}: placement failed with {len(draws)} objects, retrying with fewer")
            draws = draws[:-1]


def _render_all(jobs: Sequence[tuple[list[ClassSpec], int, int, int]], workers: int) -> tuple[Scene, ...]:
    if workers <= 1 or len(jobs) < 2:
        return tuple(_render_with_fallback(*job) for job in jobs)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return tuple(pool.map(lambda job: _render_with_fallback(*job), jobs))


def sample_training_scenes(
    classes: Sequence[ClassSpec],
    shots: int,
    seed: int,
    trial: int = 1,
    image_size: int = DEFAULT_IMAGE_SIZE,
    *,
    workers: int = 1,
) -> tuple[Scene, ...]:
    """``shots`` single-class scenes per class, ordered class by class.

    Raises:
        SplurgeContextTransformerParameterError: If ``shots`` < 1
    """
    if shots < 1:
        raise SplurgeContextTransformerParameterError(f"Shots per class must be >= 1, got {shots}")
    jobs: list[tuple[list[ClassSpec], int, int, int]] = []
    for spec in classes:
        for shot in range(shots):
            scene_seed = derive_seed(seed, trial, spec.class_id, shot)
            count = 1 + Xoshiro256StarStar(scene_seed).integers(MAX_OBJECTS[spec.domain])
            jobs.append(([spec] * count, derive_seed(scene_seed, 1), image_size, len(jobs)))
    return _render_all(jobs, workers)


def sample_test_scenes(
    classes: Sequence[ClassSpec],
    count: int = TEST_SCENES_PER_FAMILY,
    test_seed: int = DEFAULT_TEST_SEED,
    image_size: int = DEFAULT_IMAGE_SIZE,
    *,
    workers: int = 1,
) -> tuple[Scene, ...]:
    """Held-out scenes, each showing instances of one uniformly drawn class."""
    family = class_family_key(classes)
    jobs: list[tuple[list[ClassSpec], int, int, int]] = []
    for index in range(count):
        scene_seed = derive_seed(test_seed, family, index)
        rng = Xoshiro256StarStar(scene_seed)
        spec = rng.choice(classes)
        n = 1 + rng.integers(MAX_OBJECTS[spec.domain])
        jobs.append(([spec] * n, derive_seed(scene_seed, 1), image_size, index))
    return _render_all(jobs, workers)


def sample_episode(spec: EpisodeSpec, *, workers: int = 1) -> Episode:
    """Training shots for ``spec.trial`` plus the family's fixed test set."""
    train = sample_training_scenes(spec.classes, spec.shots, spec.seed, spec.trial, spec.image_size, workers=workers)
    test = sample_test_scenes(spec.classes, spec.test_scenes, spec.test_seed, spec.image_size, workers=workers)
    logger.debug(f"Episode trial={spec.trial} shots={spec.shots}: {len(train)} train / {len(test)} test scenes")
    return Episode(spec=spec, train=train, test=test)


def build_source_scenes(
    classes: Sequence[ClassSpec],
    count: int,
    seed: int,
    image_size: int = DEFAULT_IMAGE_SIZE,
    *,
    workers: int = 1,
) -> tuple[Scene, ...]:
    """Mixed-class source scenes with one to three glyphs each, for pretraining and source evaluation."""
    jobs: list[tuple[list[ClassSpec], int, int, int]] = []
    for index in range(count):
        scene_seed = derive_seed(seed, 0x50, index)
        rng = Xoshiro256StarStar(scene_seed)
        n = 1 + rng.integers(MAX_OBJECTS["source"])
        jobs.append(([rng.choice(classes) for _ in range(n)], derive_seed(scene_seed, 1), image_size, index))
    return _render_all(jobs, workers)
