"""
Scene rendering for the synthetic benchmark.

A scene is a noisy background with one to a few annotated glyphs. Every
target-class glyph brings its class's unlabeled context glyph, placed in
the image at least one glyph width away. Context glyphs are recorded on
the scene for inspection but never appear in the annotations.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from ..anchors import Box
from ..exceptions import SplurgeContextTransformerParameterError, SplurgeContextTransformerPlacementError
from .classes import ClassSpec, GlyphSpec
from .rng import Xoshiro256StarStar

# Module domains
DOMAINS = ["synthdata", "render", "scene"]

__all__ = [
    "DEFAULT_IMAGE_SIZE",
    "MAX_OVERLAP",
    "Annotation",
    "ContextMark",
    "Scene",
    "glyph_mask",
    "render_scene",
    "flip_scene",
]

DEFAULT_IMAGE_SIZE = 64
MAX_OVERLAP = 0.8

_CLEAN_OVERLAP = 0.1
_PLACEMENT_ATTEMPTS = 60
_COLOR_JITTER = 0.1
_MAX_ROTATION = math.pi / 12


@dataclass(frozen=True)
class Annotation:
    """A labelled object: center-form box in normalized coordinates plus class id."""

    box: Box
    class_id: int


@dataclass(frozen=True)
class ContextMark:
    """An unlabeled context glyph and the target class it accompanies."""

    box: Box
    shape: str
    for_class: int


@dataclass(frozen=True)
class Scene:
    """Rendered image (H x W x 3 in [0, 1]) with its annotations."""

    image: np.ndarray
    annotations: tuple[Annotation, ...]
    seed: int
    domain: str
    scene_id: int = 0
    context: tuple[ContextMark, ...] = field(default=())

    @property
    def boxes(self) -> np.ndarray:
        return np.asarray([a.box for a in self.annotations], dtype=np.float64).reshape(-1, 4)

    @property
    def labels(self) -> np.ndarray:
        return np.asarray([a.class_id for a in self.annotations], dtype=np.int64)


def _value_noise(rng: Xoshiro256StarStar, size: int, cells: int) -> np.ndarray:
    lattice = np.asarray([[rng.random() for _ in range(cells + 1)] for _ in range(cells + 1)])
    coords = (np.arange(size) + 0.5) / size * cells
    i0 = np.floor(coords).astype(int)
    t = coords - i0
    s = t * t * (3.0 - 2.0 * t)
    rows = lattice[i0] * (1 - s)[:, None] + lattice[i0 + 1] * s[:, None]
    return rows[:, i0] * (1 - s)[None, :] + rows[:, i0 + 1] * s[None, :]


def _background(rng: Xoshiro256StarStar, size: int) -> np.ndarray:
    noise = 0.65 * _value_noise(rng, size, 4) + 0.35 * _value_noise(rng, size, 8)
    tint = np.asarray([rng.uniform(0.9, 1.1) for _ in range(3)])
    return (0.3 + 0.25 * noise)[:, :, None] * tint[None, None, :]


def glyph_mask(shape: str, cx: float, cy: float, size: float, angle: float, image_size: int) -> np.ndarray:
    """Boolean ``image_size x image_size`` mask of a glyph (all geometry in pixels)."""
    centers = np.arange(image_size) + 0.5
    dx = centers[None, :] - cx
    dy = centers[:, None] - cy
    cos, sin = math.cos(angle), math.sin(angle)
    u = cos * dx + sin * dy
    v = -sin * dx + cos * dy
    half = size / 2.0
    radius = np.hypot(u, v)
    if shape == "circle":
        return radius <= half
    if shape == "ring":
        return (radius <= half) & (radius >= 0.6 * half)
    if shape == "square":
        return (np.abs(u) <= 0.85 * half) & (np.abs(v) <= 0.85 * half)
    if shape == "bar":
        return (np.abs(u) <= half) & (np.abs(v) <= 0.3 * half)
    if shape == "cross":
        arm = 0.3 * half
        return ((np.abs(u) <= arm) & (np.abs(v) <= half)) | ((np.abs(v) <= arm) & (np.abs(u) <= half))
    if shape == "triangle":
        # apex up, base down; inside when below both slanted edges and above the base
        base = 0.85 * half
        return (v <= base) & (v >= -half + 2.0 * np.abs(u) * (half + base) / (2.0 * half))
    raise SplurgeContextTransformerParameterError(f"Unknown glyph shape '{shape}'")


def _extent(mask: np.ndarray) -> tuple[int, int, int, int] | None:
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return None
    return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1


def _overlap(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> float:
    """Intersection over the smaller of the two areas."""
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    smaller = min((a[2] - a[0]) * (a[3] - a[1]), (b[2] - b[0]) * (b[3] - b[1]))
    return (iw * ih) / smaller


@dataclass
class _Placed:
    mask: np.ndarray
    extent: tuple[int, int, int, int]
    color: np.ndarray
    center: tuple[float, float]
    size: float


def _place(
    rng: Xoshiro256StarStar,
    glyph: GlyphSpec,
    image_size: int,
    occupied: Sequence[_Placed],
    *,
    near: _Placed | None = None,
) -> _Placed:
    lo, hi = glyph.size_range
    best: _Placed | None = None
    best_overlap = math.inf
    for _ in range(_PLACEMENT_ATTEMPTS):
        size = rng.uniform(lo, hi) * image_size
        half = size / 2.0
        cx = rng.uniform(half + 1.0, image_size - half - 1.0)
        cy = rng.uniform(half + 1.0, image_size - half - 1.0)
        angle = rng.uniform(-_MAX_ROTATION, _MAX_ROTATION)
        color = np.clip(np.asarray(glyph.color) + [rng.uniform(-_COLOR_JITTER, _COLOR_JITTER) for _ in range(3)], 0, 1)
        if near is not None and math.dist((cx, cy), near.center) < near.size:
            continue
        mask = glyph_mask(glyph.shape, cx, cy, size, angle, image_size)
        extent = _extent(mask)
        if extent is None:
            continue
        overlap = max((_overlap(extent, other.extent) for other in occupied), default=0.0)
        candidate = _Placed(mask, extent, color, (cx, cy), size)
        if overlap <= _CLEAN_OVERLAP:
            return candidate
        if overlap < best_overlap:
            best, best_overlap = candidate, overlap
    if best is None or best_overlap > MAX_OVERLAP:
        raise SplurgeContextTransformerPlacementError(
            f"Cannot place a {glyph.shape} glyph without more than {MAX_OVERLAP:.0%} overlap",
            details={"placed": len(occupied), "image_size": image_size},
        )
    return best


def _to_box(extent: tuple[int, int, int, int], image_size: int) -> Box:
    x0, y0, x1, y1 = (v / image_size for v in extent)
    return Box((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0)


def render_scene(
    draws: Sequence[ClassSpec],
    seed: int,
    image_size: int = DEFAULT_IMAGE_SIZE,
    *,
    render_context: bool = True,
    clutter: bool = True,
    scene_id: int = 0,
) -> Scene:
    """Render one scene deterministically from ``seed``.

    Args:
        draws: Class of every annotated glyph (at least one).
        seed: 64-bit scene seed.
        image_size: Side length in pixels.
        render_context: When false, context glyphs are placed but not painted,
            so the rest of the scene is identical to the rendered-context version.
        clutter: Paint a few small unlabeled specks.
        scene_id: Identifier carried into dumps and reports.

    Raises:
        SplurgeContextTransformerParameterError: If ``draws`` is empty
        SplurgeContextTransformerPlacementError: If the glyphs cannot be laid out
    """
    if not draws:
        raise SplurgeContextTransformerParameterError("A scene needs at least one foreground object")
    rng = Xoshiro256StarStar(seed)
    image = _background(rng, image_size)

    objects: list[tuple[ClassSpec, _Placed]] = []
    for spec in draws:
        placed = _place(rng, spec.glyph, image_size, [p for _, p in objects])
        objects.append((spec, placed))

    contexts: list[tuple[ClassSpec, _Placed]] = []
    seen: set[int] = set()
    for spec, placed in objects:
        if spec.context_glyph is None or spec.class_id in seen:
            continue
        seen.add(spec.class_id)
        occupied = [p for _, p in objects] + [p for _, p in contexts]
        contexts.append((spec, _place(rng, spec.context_glyph, image_size, occupied, near=placed)))

    specks = rng.integers(4) if clutter else 0
    for _ in range(specks):
        side = 2 + rng.integers(2)
        x, y = rng.integers(image_size - side), rng.integers(image_size - side)
        image[y : y + side, x : x + side, :] = rng.uniform(0.2, 0.8)

    if render_context:
        for _, placed in contexts:
            image[placed.mask] = placed.color
    for _, placed in objects:
        image[placed.mask] = placed.color

    domain = "target" if any(spec.domain == "target" for spec in draws) else "source"
    image = np.clip(image, 0.0, 1.0)
    image.flags.writeable = False
    return Scene(
        image=image,
        annotations=tuple(Annotation(_to_box(p.extent, image_size), spec.class_id) for spec, p in objects),
        seed=seed,
        domain=domain,
        scene_id=scene_id,
        context=tuple(
            ContextMark(_to_box(p.extent, image_size), spec.context_glyph.shape, spec.class_id)
            for spec, p in contexts
            if spec.context_glyph is not None
        ),
    )


def flip_scene(scene: Scene) -> Scene:
    """Mirror a scene left to right, boxes included."""
    image = np.ascontiguousarray(scene.image[:, ::-1, :])
    image.flags.writeable = False

    def mirror(box: Box) -> Box:
        return Box(1.0 - box.cx, box.cy, box.w, box.h)

    return Scene(
        image=image,
        annotations=tuple(Annotation(mirror(a.box), a.class_id) for a in scene.annotations),
        seed=scene.seed,
        domain=scene.domain,
        scene_id=scene.scene_id,
        context=tuple(ContextMark(mirror(c.box), c.shape, c.for_class) for c in scene.context),
    )
