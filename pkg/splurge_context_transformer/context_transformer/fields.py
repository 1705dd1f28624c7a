"""
Source score sets and contextual fields.

``P_k`` is the per-scale source OBJ score tensor of shape
``H_k x W_k x (M_k * C_s)`` with the channel axis ordered ratio-major
(channel ``m * C_s + c``). A row-major reshape to ``(H_k * W_k * M_k) x C_s``
therefore yields rows in prior-box order, and concatenating the scales in
ascending order gives the matrix ``P``.

Contextual fields pool each ``P_k`` spatially (channelwise, so the ratio
and class structure of the channel axis is kept) and flatten the same way.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from ..exceptions import SplurgeContextTransformerDimensionError, SplurgeContextTransformerParameterError
from ..numerics import Tensor, concat_rows, pooled_extent, reshape, spatial_avg_pool, spatial_max_pool, take_rows

# Module domains
DOMAINS = ["context_transformer", "fields", "pooling"]

__all__ = [
    "PoolEntry",
    "PoolingConfig",
    "SourceScoreSet",
    "ContextFieldSet",
    "build_context_fields",
    "count_context_fields",
]

# (kernel, stride) or None for pass-through
PoolEntry = tuple[int, int] | None


@dataclass(frozen=True)
class PoolingConfig:
    """One pooling entry per scale plus the pooling kind and border mode."""

    entries: tuple[PoolEntry, ...]
    kind: str = "max"
    ceil_mode: bool = True

    @classmethod
    def pass_through(cls, num_scales: int) -> PoolingConfig:
        return cls(tuple(None for _ in range(num_scales)), kind="none")

    @classmethod
    def from_kernels(cls, kernels: Sequence[int | None], kind: str = "max", ceil_mode: bool = True) -> PoolingConfig:
        """Stride equal to kernel on every pooled scale."""
        return cls(tuple(None if k is None else (int(k), int(k)) for k in kernels), kind=kind, ceil_mode=ceil_mode)

    def to_dict(self) -> dict[str, Any]:
        return {
            "entries": [None if e is None else list(e) for e in self.entries],
            "kind": self.kind,
            "ceil_mode": self.ceil_mode,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PoolingConfig:
        return cls(
            tuple(None if e is None else (int(e[0]), int(e[1])) for e in data["entries"]),
            kind=data["kind"],
            ceil_mode=bool(data["ceil_mode"]),
        )

    def validate(self, num_scales: int) -> None:
        if len(self.entries) != num_scales:
            raise SplurgeContextTransformerParameterError(
                f"Pooling config lists {len(self.entries)} entries for {num_scales} scales"
            )
        if self.kind not in ("max", "avg", "none"):
            raise SplurgeContextTransformerParameterError(f"Unknown pooling kind '{self.kind}'")
        for entry in self.entries:
            if entry is not None and (entry[0] <= 0 or entry[1] <= 0):
                raise SplurgeContextTransformerParameterError(f"Pooling kernel/stride must be positive, got {entry}")


@dataclass(frozen=True)
class SourceScoreSet:
    """Per-scale source score tensors and their flattened matrix ``P`` (``D_p x C_s``)."""

    per_scale: tuple[Tensor, ...]
    ratios_per_scale: tuple[int, ...]
    num_classes: int
    matrix: Tensor

    @classmethod
    def from_scale_tensors(
        cls, per_scale: Sequence[Tensor], ratios_per_scale: Sequence[int], num_classes: int
    ) -> SourceScoreSet:
        """Flatten ``P_k`` tensors into ``P``.

        Raises:
            SplurgeContextTransformerDimensionError: If a channel axis is not ``M_k * C_s``
        """
        rows = []
        for k, (tensor, ratios) in enumerate(zip(per_scale, ratios_per_scale, strict=True)):
            if tensor.ndim != 3 or tensor.shape[2] != ratios * num_classes:
                raise SplurgeContextTransformerDimensionError(
                    f"Scale {k} score tensor has shape {tensor.shape}, expected H x W x {ratios * num_classes}"
                )
            height, width, _ = tensor.shape
            rows.append(reshape(tensor, (height * width * ratios, num_classes)))
        return cls(tuple(per_scale), tuple(ratios_per_scale), num_classes, concat_rows(rows))

    @classmethod
    def from_matrix(
        cls, matrix: Tensor, grids: Sequence[tuple[int, int]], ratios_per_scale: Sequence[int]
    ) -> SourceScoreSet:
        """Split a ``D_p x C_s`` matrix back into per-scale tensors (the matrix itself is kept)."""
        num_classes = matrix.shape[1]
        expected = sum(h * w * m for (h, w), m in zip(grids, ratios_per_scale, strict=True))
        if matrix.ndim != 2 or matrix.shape[0] != expected:
            raise SplurgeContextTransformerDimensionError(
                f"Score matrix has shape {matrix.shape}, expected {expected} rows"
            )
        per_scale = []
        start = 0
        for (height, width), ratios in zip(grids, ratios_per_scale, strict=True):
            count = height * width * ratios
            block = take_rows(matrix, np.arange(start, start + count))
            per_scale.append(reshape(block, (height, width, ratios * num_classes)))
            start += count
        return cls(tuple(per_scale), tuple(ratios_per_scale), num_classes, matrix)

    @property
    def grids(self) -> tuple[tuple[int, int], ...]:
        return tuple((t.shape[0], t.shape[1]) for t in self.per_scale)

    @property
    def scale_offsets(self) -> tuple[int, ...]:
        offsets = [0]
        for (height, width), ratios in zip(self.grids, self.ratios_per_scale, strict=True):
            offsets.append(offsets[-1] + height * width * ratios)
        return tuple(offsets)


@dataclass(frozen=True)
class ContextFieldSet:
    """Pooled score tensors ``Q_k``, the flattened ``Q`` (``D_q x C_s``) and field provenance."""

    per_scale: tuple[Tensor, ...]
    matrix: Tensor
    provenance: np.ndarray
    pooling: PoolingConfig

    def __len__(self) -> int:
        return int(self.matrix.shape[0])


def _field_provenance(grids: Sequence[tuple[int, int]], ratios_per_scale: Sequence[int]) -> np.ndarray:
    rows = [
        (k, u, v, m)
        for k, ((height, width), ratios) in enumerate(zip(grids, ratios_per_scale, strict=True))
        for u in range(height)
        for v in range(width)
        for m in range(ratios)
    ]
    return np.asarray(rows, dtype=np.int64).reshape(-1, 4)


def build_context_fields(scores: SourceScoreSet, pooling: PoolingConfig) -> ContextFieldSet:
    """Pool every ``P_k`` into ``Q_k`` and flatten into ``Q``.

    Pass-through entries (``None``) and ``kind == "none"`` copy the scale
    unchanged, so an all-pass-through config gives ``Q == P``.

    Raises:
        SplurgeContextTransformerParameterError: On a bad config or a kernel that does not fit with ceil_mode off
    """
    pooling.validate(len(scores.per_scale))
    pooled: list[Tensor] = []
    for tensor, entry in zip(scores.per_scale, pooling.entries, strict=True):
        if entry is None or pooling.kind == "none":
            pooled.append(tensor)
            continue
        kernel, stride = entry
        pool = spatial_max_pool if pooling.kind == "max" else spatial_avg_pool
        pooled.append(pool(tensor, kernel, stride, pooling.ceil_mode))
    if all(p is t for p, t in zip(pooled, scores.per_scale, strict=True)):
        matrix = scores.matrix
    else:
        matrix = SourceScoreSet.from_scale_tensors(pooled, scores.ratios_per_scale, scores.num_classes).matrix
    provenance = _field_provenance([(p.shape[0], p.shape[1]) for p in pooled], scores.ratios_per_scale)
    return ContextFieldSet(tuple(pooled), matrix, provenance, pooling)


def count_context_fields(
    grids: Sequence[tuple[int, int]],
    ratios_per_scale: Sequence[int],
    pooling: PoolingConfig,
) -> int:
    """Closed-form ``D_q = sum_k U_k * V_k * M_k`` for a pooling config."""
    pooling.validate(len(grids))
    total = 0
    for (height, width), ratios, entry in zip(grids, ratios_per_scale, pooling.entries, strict=True):
        if entry is None or pooling.kind == "none":
            total += height * width * ratios
            continue
        kernel, stride = entry
        rows = pooled_extent(height, kernel, stride, pooling.ceil_mode)
        cols = pooled_extent(width, kernel, stride, pooling.ceil_mode)
        total += rows * cols * ratios
    return total
