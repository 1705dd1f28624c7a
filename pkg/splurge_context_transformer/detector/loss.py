"""
Multibox loss with hard negative mining.

For one image with ``N_pos`` positive priors::

    L_loc = sum over positives of smooth-L1(predicted offsets - encoded GT)
    L_bg  = BCE on objectness over positives and the 3 N_pos hardest negatives
    L_cls = cross-entropy of the class softmax over positives

A batch sums each term over its images and divides by the batch's total
number of positives. Batches without positives produce no loss; callers
skip them.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ..anchors import MatchResult, PriorBoxSet, encode_offsets
from ..exceptions import SplurgeContextTransformerDimensionError
from ..numerics import (
    Tensor,
    add,
    bce_with_logits,
    log_softmax_rows,
    scale,
    smooth_l1,
    sub,
    sum_all,
    take_entries,
    take_rows,
)

# Module domains
DOMAINS = ["detector", "loss", "training"]

__all__ = [
    "NEG_POS_RATIO",
    "LossTerms",
    "LossBreakdown",
    "MatchedTargets",
    "prepare_targets",
    "hard_negative_mining",
    "multibox_terms",
    "combine_losses",
    "multibox_loss",
]

NEG_POS_RATIO = 3


@dataclass(frozen=True)
class MatchedTargets:
    """Per-image training targets derived once from the ground truth."""

    positives: np.ndarray
    labels: np.ndarray
    offsets: np.ndarray
    objectness: np.ndarray

    @property
    def num_positives(self) -> int:
        return int(self.positives.size)


def prepare_targets(
    match: MatchResult, gt_boxes: np.ndarray, gt_labels: Sequence[int] | np.ndarray, priors: PriorBoxSet
) -> MatchedTargets:
    """Class index and encoded offsets for every positive prior, plus 0/1 objectness for all priors."""
    positives = match.positives
    gt_index = match.assignment[positives]
    labels = np.asarray(gt_labels, dtype=np.int64)[gt_index]
    offsets = (
        encode_offsets(np.asarray(gt_boxes)[gt_index], priors.boxes[positives])
        if positives.size
        else np.zeros((0, 4))
    )
    objectness = np.zeros((len(priors), 1))
    objectness[positives] = 1.0
    return MatchedTargets(positives, labels, offsets, objectness)


def hard_negative_mining(losses: np.ndarray, positive_mask: np.ndarray, ratio: int = NEG_POS_RATIO) -> np.ndarray:
    """Indices of the ``ratio * N_pos`` highest-loss negatives (fewer if not enough exist).

    Ties are broken by prior index.
    """
    losses = np.asarray(losses, dtype=np.float64).reshape(-1)
    positive_mask = np.asarray(positive_mask, dtype=bool).reshape(-1)
    negatives = np.flatnonzero(~positive_mask)
    budget = min(ratio * int(positive_mask.sum()), negatives.size)
    order = np.argsort(-losses[negatives], kind="stable")
    return negatives[order[:budget]]


@dataclass
class LossTerms:
    """Unnormalized per-image sums."""

    loc: Tensor
    bg: Tensor
    cls: Tensor
    num_positives: int


@dataclass
class LossBreakdown:
    total: Tensor
    loc: float
    bg: float
    cls: float
    num_positives: int

    @property
    def value(self) -> float:
        return float(self.total.data.reshape(-1)[0])


def multibox_terms(
    offsets: Tensor,
    bg_logits: Tensor,
    class_logits: Tensor,
    targets: MatchedTargets,
    neg_pos_ratio: int = NEG_POS_RATIO,
) -> LossTerms | None:
    """Loss sums for one image, or ``None`` when it has no positive prior.

    Raises:
        SplurgeContextTransformerDimensionError: If the prediction row counts differ
    """
    rows = offsets.shape[0]
    if bg_logits.shape != (rows, 1) or class_logits.shape[0] != rows:
        raise SplurgeContextTransformerDimensionError(
            f"Prediction shapes disagree: offsets {offsets.shape}, bg {bg_logits.shape}, cls {class_logits.shape}"
        )
    if targets.num_positives == 0:
        return None
    pos = targets.positives

    loc = sum_all(smooth_l1(sub(take_rows(offsets, pos), Tensor(targets.offsets, dtype=offsets.dtype))))

    z = bg_logits.data.astype(np.float64)
    per_prior = np.logaddexp(0.0, -np.abs(z)) + np.maximum(z, 0.0) - z * targets.objectness
    mask = targets.objectness.reshape(-1) > 0
    chosen = np.concatenate([pos, hard_negative_mining(per_prior, mask, neg_pos_ratio)])
    bg = sum_all(bce_with_logits(take_rows(bg_logits, chosen), targets.objectness[chosen]))

    log_probs = log_softmax_rows(take_rows(class_logits, pos))
    cls = scale(sum_all(take_entries(log_probs, np.arange(pos.size), targets.labels)), -1.0)
    return LossTerms(loc=loc, bg=bg, cls=cls, num_positives=targets.num_positives)


def combine_losses(terms: Sequence[LossTerms | None]) -> LossBreakdown | None:
    """Sum per-image terms and normalize by the total positive count; ``None`` if there are no positives."""
    present = [t for t in terms if t is not None]
    num_positives = sum(t.num_positives for t in present)
    if num_positives == 0:
        return None
    loc, bg, cls = present[0].loc, present[0].bg, present[0].cls
    for t in present[1:]:
        loc, bg, cls = add(loc, t.loc), add(bg, t.bg), add(cls, t.cls)
    inv = 1.0 / num_positives
    total = scale(add(add(loc, bg), cls), inv)
    return LossBreakdown(
        total=total,
        loc=float(loc.data.reshape(-1)[0]) * inv,
        bg=float(bg.data.reshape(-1)[0]) * inv,
        cls=float(cls.data.reshape(-1)[0]) * inv,
        num_positives=num_positives,
    )


def multibox_loss(
    offsets: Tensor,
    bg_logits: Tensor,
    class_logits: Tensor,
    targets: MatchedTargets,
    neg_pos_ratio: int = NEG_POS_RATIO,
) -> LossBreakdown | None:
    """Single-image convenience wrapper around :func:`multibox_terms` and :func:`combine_losses`."""
    return combine_losses([multibox_terms(offsets, bg_logits, class_logits, targets, neg_pos_ratio)])
