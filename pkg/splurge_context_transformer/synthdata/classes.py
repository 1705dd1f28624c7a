"""
Class catalogue for the synthetic benchmark.

Source classes are visually distinct glyphs. Target classes come in
confusion groups whose members share a shape and nearly share a color;
each member is always accompanied by a different unlabeled context glyph,
and the context glyph is drawn to look like one of the source classes.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, NamedTuple

# Module domains
DOMAINS = ["synthdata", "classes", "benchmark"]

__all__ = [
    "GlyphShape",
    "GLYPH_SHAPES",
    "GlyphSpec",
    "ClassSpec",
    "Benchmark",
    "PERTURBATION_RADIUS",
    "color_distance",
    "default_benchmark",
]

GlyphShape = Literal["circle", "square", "triangle", "cross", "bar", "ring"]
GLYPH_SHAPES: tuple[str, ...] = ("circle", "square", "triangle", "cross", "bar", "ring")

PERTURBATION_RADIUS = 0.05

Color = tuple[float, float, float]


@dataclass(frozen=True)
class GlyphSpec:
    """Appearance of a glyph: shape, fill color and size range (fraction of image side)."""

    shape: str
    color: Color
    size_range: tuple[float, float]


@dataclass(frozen=True)
class ClassSpec:
    """One benchmark class.

    Attributes:
        class_id: Globally unique id; source and target ids never overlap.
        name: Human readable label used in reports.
        glyph: Appearance of annotated instances.
        domain: ``"source"`` or ``"target"``.
        confusion_group: Id shared by near-identical target classes.
        context_glyph: Unlabeled glyph drawn alongside every scene containing this class.
    """

    class_id: int
    name: str
    glyph: GlyphSpec
    domain: str
    confusion_group: int | None = None
    context_glyph: GlyphSpec | None = None

    @property
    def shape(self) -> str:
        return self.glyph.shape

    @property
    def color(self) -> Color:
        return self.glyph.color


class Benchmark(NamedTuple):
    """Source and target class lists; unpacks as ``(source, target)``."""

    source: tuple[ClassSpec, ...]
    target: tuple[ClassSpec, ...]

    def confusion_groups(self) -> dict[int, tuple[ClassSpec, ...]]:
        groups: dict[int, list[ClassSpec]] = {}
        for spec in self.target:
            if spec.confusion_group is not None:
                groups.setdefault(spec.confusion_group, []).append(spec)
        return {gid: tuple(members) for gid, members in groups.items()}


def color_distance(a: Color, b: Color) -> float:
    return math.dist(a, b)


_SOURCE_SIZE = (0.2, 0.42)
_TARGET_SIZE = (0.24, 0.38)
_CONTEXT_SIZE = (0.18, 0.24)

_SOURCE_GLYPHS: tuple[tuple[str, str, Color], ...] = (
    ("red-circle", "circle", (0.90, 0.15, 0.15)),
    ("blue-circle", "circle", (0.15, 0.30, 0.90)),
    ("green-square", "square", (0.15, 0.75, 0.20)),
    ("yellow-square", "square", (0.95, 0.85, 0.10)),
    ("magenta-triangle", "triangle", (0.85, 0.15, 0.80)),
    ("cyan-triangle", "triangle", (0.10, 0.80, 0.85)),
    ("white-cross", "cross", (0.95, 0.95, 0.95)),
    ("red-cross", "cross", (0.80, 0.10, 0.10)),
    ("blue-bar", "bar", (0.10, 0.20, 0.75)),
    ("yellow-bar", "bar", (0.90, 0.90, 0.20)),
    ("green-ring", "ring", (0.20, 0.80, 0.30)),
    ("white-ring", "ring", (0.92, 0.92, 0.92)),
)


def _context_like(source_index: int) -> GlyphSpec:
    _, shape, color = _SOURCE_GLYPHS[source_index]
    return GlyphSpec(shape, color, _CONTEXT_SIZE)


def default_benchmark() -> Benchmark:
    """Twelve source classes and four target classes in two confusion groups.

    Group 0 is a pair of orange rings told apart by a nearby white cross or
    blue bar; group 1 is a pair of purple squares told apart by a nearby
    red circle or cyan triangle. Member colors differ by less than
    :data:`PERTURBATION_RADIUS`.
    """
    source = tuple(
        ClassSpec(class_id=i, name=name, glyph=GlyphSpec(shape, color, _SOURCE_SIZE), domain="source")
        for i, (name, shape, color) in enumerate(_SOURCE_GLYPHS)
    )
    base = len(source)
    members = (
        # name, shape, color, confusion group, source glyph used as context
        ("orange-ring-a", "ring", (0.95, 0.55, 0.10), 0, 6),
        ("orange-ring-b", "ring", (0.95, 0.56, 0.115), 0, 8),
        ("purple-square-a", "square", (0.50, 0.20, 0.65), 1, 0),
        ("purple-square-b", "square", (0.51, 0.21, 0.64), 1, 5),
    )
    target = tuple(
        ClassSpec(
            class_id=base + i,
            name=name,
            glyph=GlyphSpec(shape, color, _TARGET_SIZE),
            domain="target",
            confusion_group=group,
            context_glyph=_context_like(context_source),
        )
        for i, (name, shape, color, group, context_source) in enumerate(members)
    )
    return Benchmark(source=source, target=target)
