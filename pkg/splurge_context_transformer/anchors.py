"""
Prior boxes, IoU, ground-truth matching, offset coding and NMS.

Boxes are ``(cx, cy, w, h)`` rows in normalized image coordinates. Prior
boxes are flattened in a fixed order: ascending scale, then row-major
cells within the scale, then aspect-ratio index. Detection heads and the
context modules use the same order, so row ``i`` of any per-prior matrix
belongs to ``PriorBoxSet.provenance_of(i)``.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import SplurgeContextTransformerInputError, SplurgeContextTransformerParameterError

# Module domains
DOMAINS = ["anchors", "priors", "matching", "nms"]

__all__ = [
    "VARIANCES",
    "Box",
    "Provenance",
    "PriorSpec",
    "PriorBoxSet",
    "default_prior_spec",
    "count_priors",
    "generate_priors",
    "box_to_corners",
    "corners_to_box",
    "flip_boxes_horizontal",
    "iou",
    "iou_matrix",
    "MatchResult",
    "match_priors",
    "encode_offsets",
    "decode_offsets",
    "nms",
]

VARIANCES = (0.1, 0.2)

DEFAULT_GRIDS: tuple[tuple[int, int], ...] = ((8, 8), (4, 4), (2, 2))
DEFAULT_RATIOS: tuple[float, ...] = (1.0, 2.0, 0.5)
DEFAULT_BASE_SIZES: tuple[float, ...] = (0.2, 0.45, 0.8)


class Box(NamedTuple):
    """A single box in center form."""

    cx: float
    cy: float
    w: float
    h: float

    def corners(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2, self.cy - self.h / 2, self.cx + self.w / 2, self.cy + self.h / 2)


class Provenance(NamedTuple):
    """Where a prior box (or context field) lives: scale, cell row, cell column, ratio index."""

    scale: int
    row: int
    col: int
    ratio: int


@dataclass(frozen=True)
class PriorSpec:
    """Per-scale grid sizes, aspect ratios and base sizes."""

    grids: tuple[tuple[int, int], ...]
    aspect_ratios: tuple[tuple[float, ...], ...]
    base_sizes: tuple[float, ...]

    @classmethod
    def uniform(
        cls,
        grids: Sequence[Sequence[int]],
        ratios: Sequence[float] = DEFAULT_RATIOS,
        base_sizes: Sequence[float] | None = None,
    ) -> PriorSpec:
        """Same ratio set on every scale; base sizes spread linearly over (0.2, 0.8) when omitted."""
        grid_tuple = tuple((int(h), int(w)) for h, w in grids)
        if base_sizes is None:
            count = len(grid_tuple)
            base_sizes = [0.2 + 0.6 * k / max(count - 1, 1) for k in range(count)]
        return cls(grid_tuple, tuple(tuple(float(r) for r in ratios) for _ in grid_tuple), tuple(base_sizes))

    @property
    def num_scales(self) -> int:
        return len(self.grids)

    @property
    def ratios_per_scale(self) -> tuple[int, ...]:
        return tuple(len(r) for r in self.aspect_ratios)

    def validate(self) -> None:
        """Raise a parameter error for an empty or inconsistent spec."""
        if not self.grids:
            raise SplurgeContextTransformerParameterError("Prior spec must list at least one scale")
        if len(self.aspect_ratios) != len(self.grids) or len(self.base_sizes) != len(self.grids):
            raise SplurgeContextTransformerParameterError(
                "Prior spec lists differ in length",
                details={
                    "grids": len(self.grids),
                    "aspect_ratios": len(self.aspect_ratios),
                    "base_sizes": len(self.base_sizes),
                },
            )
        for k, ((h, w), ratios, size) in enumerate(zip(self.grids, self.aspect_ratios, self.base_sizes, strict=True)):
            if h <= 0 or w <= 0 or not ratios or size <= 0 or any(r <= 0 for r in ratios):
                raise SplurgeContextTransformerParameterError(
                    f"Scale {k} has a nonpositive extent, ratio or size",
                    details={"grid": (h, w), "ratios": ratios, "base_size": size},
                )


def default_prior_spec() -> PriorSpec:
    """Three scales (8x8, 4x4, 2x2) with ratios {1, 2, 0.5}."""
    return PriorSpec.uniform(DEFAULT_GRIDS, DEFAULT_RATIOS, DEFAULT_BASE_SIZES)


def count_priors(spec: PriorSpec) -> int:
    """Closed form ``sum_k H_k * W_k * M_k``."""
    return sum(h * w * m for (h, w), m in zip(spec.grids, spec.ratios_per_scale, strict=True))


@dataclass(frozen=True)
class PriorBoxSet:
    """Flattened prior boxes with their provenance.

    Attributes:
        spec: The generating spec.
        boxes: ``D_p x 4`` array of ``(cx, cy, w, h)``.
        provenance: ``D_p x 4`` integer array of ``(scale, row, col, ratio)``.
    """

    spec: PriorSpec
    boxes: np.ndarray
    provenance: np.ndarray

    def __len__(self) -> int:
        return int(self.boxes.shape[0])

    @property
    def scale_offsets(self) -> tuple[int, ...]:
        """First flattened index of each scale, plus the total at the end."""
        offsets = [0]
        for (h, w), m in zip(self.spec.grids, self.spec.ratios_per_scale, strict=True):
            offsets.append(offsets[-1] + h * w * m)
        return tuple(offsets)

    def provenance_of(self, index: int) -> Provenance:
        if not 0 <= index < len(self):
            raise SplurgeContextTransformerParameterError(f"Prior index {index} out of range [0, {len(self)})")
        return Provenance(*(int(v) for v in self.provenance[index]))

    def box(self, index: int) -> Box:
        return Box(*(float(v) for v in self.boxes[index]))


def generate_priors(spec: PriorSpec | None = None) -> PriorBoxSet:
    """Tile prior boxes over every scale.

    A prior of base size ``s`` and ratio ``r`` has width ``s * sqrt(r)`` and
    height ``s / sqrt(r)``, centered on its cell.

    Raises:
        SplurgeContextTransformerParameterError: If the spec is empty or has nonpositive extents
    """
    spec = spec or default_prior_spec()
    spec.validate()
    boxes: list[tuple[float, float, float, float]] = []
    provenance: list[tuple[int, int, int, int]] = []
    for k, ((grid_h, grid_w), ratios, size) in enumerate(
        zip(spec.grids, spec.aspect_ratios, spec.base_sizes, strict=True)
    ):
        for row in range(grid_h):
            for col in range(grid_w):
                cx, cy = (col + 0.5) / grid_w, (row + 0.5) / grid_h
                for m, ratio in enumerate(ratios):
                    root = math.sqrt(ratio)
                    boxes.append((cx, cy, size * root, size / root))
                    provenance.append((k, row, col, m))
    return PriorBoxSet(
        spec=spec,
        boxes=np.asarray(boxes, dtype=np.float64),
        provenance=np.asarray(provenance, dtype=np.int64),
    )


def box_to_corners(boxes: np.ndarray) -> np.ndarray:
    """``(cx, cy, w, h)`` rows to ``(x0, y0, x1, y1)`` rows."""
    boxes = np.asarray(boxes, dtype=np.float64)
    half = boxes[..., 2:] / 2
    return np.concatenate([boxes[..., :2] - half, boxes[..., :2] + half], axis=-1)


def corners_to_box(corners: np.ndarray) -> np.ndarray:
    corners = np.asarray(corners, dtype=np.float64)
    return np.concatenate([(corners[..., :2] + corners[..., 2:]) / 2, corners[..., 2:] - corners[..., :2]], axis=-1)


def flip_boxes_horizontal(boxes: np.ndarray) -> np.ndarray:
    """Mirror boxes about the vertical center line (``cx -> 1 - cx``)."""
    flipped = np.array(boxes, dtype=np.float64, copy=True)
    flipped[..., 0] = 1.0 - flipped[..., 0]
    return flipped


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between ``N x 4`` and ``M x 4`` center-form boxes."""
    ca = box_to_corners(np.asarray(a).reshape(-1, 4))
    cb = box_to_corners(np.asarray(b).reshape(-1, 4))
    lo = np.maximum(ca[:, None, :2], cb[None, :, :2])
    hi = np.minimum(ca[:, None, 2:], cb[None, :, 2:])
    inter = np.clip(hi - lo, 0.0, None).prod(axis=2)
    area_a = (ca[:, 2:] - ca[:, :2]).prod(axis=1)
    area_b = (cb[:, 2:] - cb[:, :2]).prod(axis=1)
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def iou(a: Box | Sequence[float], b: Box | Sequence[float]) -> float:
    """Intersection over union of two center-form boxes; 0 when disjoint."""
    return float(iou_matrix(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))[0, 0])


@dataclass(frozen=True)
class MatchResult:
    """Per-prior assignment: ``assignment[i]`` is a GT index or -1 for negatives."""

    assignment: np.ndarray
    overlaps: np.ndarray

    @property
    def positives(self) -> np.ndarray:
        return np.flatnonzero(self.assignment >= 0)

    @property
    def num_positives(self) -> int:
        return int((self.assignment >= 0).sum())


def match_priors(gt_boxes: np.ndarray, priors: PriorBoxSet, pos_threshold: float = 0.5) -> MatchResult:
    """Assign priors to ground-truth boxes.

    Every prior whose best IoU exceeds ``pos_threshold`` becomes positive
    for its best GT. Then the highest remaining (GT, prior) overlap is
    forced, its row and column are retired, and this repeats until every
    GT holds a prior of its own, so no two GTs compete for one forced
    prior. Ties go to the lower GT index, then the lower prior index.

    Raises:
        SplurgeContextTransformerInputError: If a GT box has zero area
    """
    gt = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    num_priors = len(priors)
    if gt.shape[0] == 0:
        return MatchResult(np.full(num_priors, -1, dtype=np.int64), np.zeros((0, num_priors)))
    if np.any(gt[:, 2] <= 0) or np.any(gt[:, 3] <= 0):
        raise SplurgeContextTransformerInputError(
            "Ground-truth box with zero area", details={"boxes": gt[(gt[:, 2] <= 0) | (gt[:, 3] <= 0)].tolist()}
        )
    overlaps = iou_matrix(gt, priors.boxes)
    best_gt = overlaps.argmax(axis=0)
    best_overlap = overlaps.max(axis=0)
    assignment = np.where(best_overlap > pos_threshold, best_gt, -1).astype(np.int64)
    remaining = overlaps.copy()
    for _ in range(min(gt.shape[0], num_priors)):
        j, i = np.unravel_index(int(remaining.argmax()), remaining.shape)
        assignment[i] = j
        remaining[j, :] = -1.0
        remaining[:, i] = -1.0
    return MatchResult(assignment, overlaps)


def encode_offsets(gt: np.ndarray, priors: np.ndarray, variances: tuple[float, float] = VARIANCES) -> np.ndarray:
    """SSD offsets of ``gt`` relative to ``priors`` (rows paired, broadcastable).

    Raises:
        SplurgeContextTransformerInputError: If a GT or prior has a nonpositive dimension
    """
    gt = np.asarray(gt, dtype=np.float64)
    priors = np.asarray(priors, dtype=np.float64)
    if np.any(gt[..., 2:] <= 0) or np.any(priors[..., 2:] <= 0):
        raise SplurgeContextTransformerInputError("Cannot encode boxes with nonpositive width or height")
    v1, v2 = variances
    centers = (gt[..., :2] - priors[..., :2]) / (priors[..., 2:] * v1)
    sizes = np.log(gt[..., 2:] / priors[..., 2:]) / v2
    return np.concatenate([centers, sizes], axis=-1)


def decode_offsets(
    offsets: np.ndarray,
    priors: np.ndarray,
    variances: tuple[float, float] = VARIANCES,
    *,
    clamp: bool = True,
) -> np.ndarray:
    """Inverse of :func:`encode_offsets`; with ``clamp`` the corners are clipped to ``[0, 1]``."""
    offsets = np.asarray(offsets, dtype=np.float64)
    priors = np.asarray(priors, dtype=np.float64)
    v1, v2 = variances
    centers = priors[..., :2] + offsets[..., :2] * v1 * priors[..., 2:]
    sizes = priors[..., 2:] * np.exp(np.clip(offsets[..., 2:] * v2, -30.0, 30.0))
    boxes = np.concatenate([centers, sizes], axis=-1)
    if not clamp:
        return boxes
    corners = np.clip(box_to_corners(boxes), 0.0, 1.0)
    clamped = corners_to_box(corners)
    clamped[..., 2:] = np.maximum(clamped[..., 2:], 1e-6)
    return clamped


def nms(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float = 0.45, top_k: int | None = 200) -> list[int]:
    """Greedy non-maximum suppression.

    Candidates are visited by descending score, ties broken by original
    index; a candidate is dropped when its IoU with an already kept box
    exceeds ``iou_threshold``.

    Returns:
        Indices of kept boxes in visit order (at most ``top_k``).
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    if scores.size == 0:
        return []
    order = np.argsort(-scores, kind="stable")
    overlaps = iou_matrix(boxes, boxes)
    suppressed = np.zeros(scores.size, dtype=bool)
    kept: list[int] = []
    for idx in order:
        if suppressed[idx]:
            continue
        kept.append(int(idx))
        if top_k is not None and len(kept) >= top_k:
            break
        suppressed |= overlaps[idx] > iou_threshold
    return kept
