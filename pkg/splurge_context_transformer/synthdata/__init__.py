"""
Synthetic context-discriminative detection benchmark.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from .calibration import OracleResult, centroid_oracle_accuracy, crop_glyph
from .classes import (
    GLYPH_SHAPES,
    PERTURBATION_RADIUS,
    Benchmark,
    ClassSpec,
    GlyphSpec,
    color_distance,
    default_benchmark,
)
from .dump import ANNOTATIONS_FILE, dump_scenes, encode_ppm, load_annotations, scene_record
from .episodes import (
    DEFAULT_TEST_SEED,
    MAX_OBJECTS,
    TEST_SCENES_PER_FAMILY,
    Episode,
    EpisodeSpec,
    build_source_scenes,
    class_family_key,
    sample_episode,
    sample_test_scenes,
    sample_training_scenes,
)
from .render import DEFAULT_IMAGE_SIZE, Annotation, ContextMark, Scene, flip_scene, glyph_mask, render_scene
from .rng import Xoshiro256StarStar, derive_seed, splitmix64

# Package domains
__domains__ = ["synthdata", "rng", "render", "episodes"]

__all__ = [
    # PRNG
    "splitmix64",
    "derive_seed",
    "Xoshiro256StarStar",
    # Classes
    "GLYPH_SHAPES",
    "PERTURBATION_RADIUS",
    "GlyphSpec",
    "ClassSpec",
    "Benchmark",
    "color_distance",
    "default_benchmark",
    # Rendering
    "DEFAULT_IMAGE_SIZE",
    "Annotation",
    "ContextMark",
    "Scene",
    "glyph_mask",
    "render_scene",
    "flip_scene",
    # Episodes
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
    # Dumps
    "ANNOTATIONS_FILE",
    "scene_record",
    "encode_ppm",
    "dump_scenes",
    "load_annotations",
    # Calibration
    "OracleResult",
    "crop_glyph",
    "centroid_oracle_accuracy",
]
