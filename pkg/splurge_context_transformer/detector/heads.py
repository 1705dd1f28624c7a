"""
Per-scale detection heads.

Each scale has a BBOX regressor (``4 M_k`` channels), a binary BG
classifier (``M_k`` channels) and a source OBJ classifier (``C_s M_k``
channels). Channels are ratio-major, so a row-major reshape of a head
output lines up with the prior-box flattening order.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ..anchors import PriorBoxSet
from ..context_transformer import SourceScoreSet
from ..exceptions import SplurgeContextTransformerConsistencyError
from ..numerics import Tensor, concat_rows, reshape
from .backbone import FEATURE_CHANNELS, ConvLayer, init_conv

# Module domains
DOMAINS = ["detector", "heads", "priors"]

__all__ = [
    "ScaleHead",
    "DetectionHeads",
    "TargetConvHead",
    "HeadOutput",
    "heads_forward",
    "count_baseline_params",
    "check_provenance",
]


@dataclass
class ScaleHead:
    bbox: ConvLayer
    bg: ConvLayer
    source_obj: ConvLayer


@dataclass
class DetectionHeads:
    """Heads for every scale plus the grid and ratio layout they were built for."""

    scales: list[ScaleHead]
    grids: tuple[tuple[int, int], ...]
    ratios_per_scale: tuple[int, ...]
    source_classes: int

    @classmethod
    def create(
        cls,
        rng: np.random.Generator,
        grids: Sequence[tuple[int, int]],
        ratios_per_scale: Sequence[int],
        source_classes: int,
        in_channels: int = FEATURE_CHANNELS,
    ) -> DetectionHeads:
        scales = []
        for k, ratios in enumerate(ratios_per_scale):
            scales.append(
                ScaleHead(
                    bbox=init_conv(f"heads.{k}.bbox", in_channels, 4 * ratios, rng),
                    bg=init_conv(f"heads.{k}.bg", in_channels, ratios, rng),
                    source_obj=init_conv(f"heads.{k}.source_obj", in_channels, source_classes * ratios, rng),
                )
            )
        return cls(scales, tuple(grids), tuple(ratios_per_scale), source_classes)

    def head_parameters(self, head: str) -> list[Tensor]:
        """Weights and biases of one head kind (``bbox``, ``bg`` or ``source_obj``) across scales."""
        return [p for scale in self.scales for p in getattr(scale, head).parameters()]


@dataclass
class TargetConvHead:
    """Fresh per-scale target classifier used by the baseline transfer variant."""

    layers: list[ConvLayer]
    target_classes: int

    @classmethod
    def create(
        cls,
        rng: np.random.Generator,
        ratios_per_scale: Sequence[int],
        target_classes: int,
        in_channels: int = FEATURE_CHANNELS,
    ) -> TargetConvHead:
        layers = [
            init_conv(f"target_head.{k}", in_channels, target_classes * ratios, rng)
            for k, ratios in enumerate(ratios_per_scale)
        ]
        return cls(layers, target_classes)

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def __call__(self, features: Sequence[Tensor]) -> Tensor:
        rows = []
        for layer, feature in zip(self.layers, features, strict=True):
            out = layer(feature)
            rows.append(reshape(out, (out.size // self.target_classes, self.target_classes)))
        return concat_rows(rows)


def count_baseline_params(
    target_classes: int, ratios_per_scale: Sequence[int], in_channels: int = FEATURE_CHANNELS, kernel: int = 3
) -> int:
    """Weights added by the baseline's target conv head: ``sum_k (k^2 C + 1) C_t M_k``."""
    return sum((kernel * kernel * in_channels + 1) * target_classes * ratios for ratios in ratios_per_scale)


@dataclass
class HeadOutput:
    offsets: Tensor
    bg_logits: Tensor
    scores: SourceScoreSet | None


def check_provenance(grids: Sequence[tuple[int, int]], ratios_per_scale: Sequence[int], priors: PriorBoxSet) -> None:
    """Verify that flattening maps of these grids reproduces the prior-box order.

    Raises:
        SplurgeContextTransformerConsistencyError: On any row whose (scale, row, col, ratio) differs
    """
    rows = [
        (k, h, w, m)
        for k, ((grid_h, grid_w), ratios) in enumerate(zip(grids, ratios_per_scale, strict=True))
        for h in range(grid_h)
        for w in range(grid_w)
        for m in range(ratios)
    ]
    flattened = np.asarray(rows, dtype=np.int64).reshape(-1, 4)
    if flattened.shape != priors.provenance.shape or not np.array_equal(flattened, priors.provenance):
        raise SplurgeContextTransformerConsistencyError(
            "Head flattening order does not match prior-box provenance",
            details={"head_grids": list(grids), "prior_grids": list(priors.spec.grids)},
        )


def heads_forward(
    features: Sequence[Tensor],
    heads: DetectionHeads,
    priors: PriorBoxSet,
    *,
    with_source_obj: bool = True,
) -> HeadOutput:
    """Run every scale's heads and flatten their outputs in prior-box order.

    Returns offsets ``D_p x 4``, BG logits ``D_p x 1`` and (unless disabled)
    the source score set whose matrix is ``P``.

    Raises:
        SplurgeContextTransformerConsistencyError: If the feature grids disagree with the priors
    """
    grids = tuple((f.shape[0], f.shape[1]) for f in features)
    check_provenance(grids, heads.ratios_per_scale, priors)
    offsets, bg, per_scale = [], [], []
    for feature, head, ratios in zip(features, heads.scales, heads.ratios_per_scale, strict=True):
        cells = feature.shape[0] * feature.shape[1]
        offsets.append(reshape(head.bbox(feature), (cells * ratios, 4)))
        bg.append(reshape(head.bg(feature), (cells * ratios, 1)))
        if with_source_obj:
            per_scale.append(head.source_obj(feature))
    scores = (
        SourceScoreSet.from_scale_tensors(per_scale, heads.ratios_per_scale, heads.source_classes)
        if with_source_obj
        else None
    )
    return HeadOutput(offsets=concat_rows(offsets), bg_logits=concat_rows(bg), scores=scores)
