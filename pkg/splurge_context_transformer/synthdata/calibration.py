"""
Confusability witness for the benchmark.

A nearest-centroid classifier on the raw pixels of cropped target glyphs.
It sees only the glyph itself, so classes that differ only through their
context glyph should be near chance within their confusion group.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import SplurgeContextTransformerParameterError
from .classes import ClassSpec
from .render import Scene

# Module domains
DOMAINS = ["synthdata", "calibration", "oracle"]

__all__ = ["OracleResult", "crop_glyph", "centroid_oracle_accuracy"]


@dataclass(frozen=True)
class OracleResult:
    accuracy: float
    samples: int
    within_group: dict[int, float] = field(default_factory=dict)


def crop_glyph(image: np.ndarray, box: Sequence[float], crop_size: int = 8) -> np.ndarray:
    """Nearest-neighbour resample of a box region to ``crop_size x crop_size x 3``, flattened."""
    height, width = image.shape[:2]
    cx, cy, w, h = box
    xs = np.clip(((cx - w / 2) + (np.arange(crop_size) + 0.5) / crop_size * w) * width, 0, width - 1).astype(int)
    ys = np.clip(((cy - h / 2) + (np.arange(crop_size) + 0.5) / crop_size * h) * height, 0, height - 1).astype(int)
    return image[np.ix_(ys, xs)].reshape(-1)


def centroid_oracle_accuracy(
    scenes: Sequence[Scene],
    classes: Sequence[ClassSpec],
    *,
    crop_size: int = 8,
) -> OracleResult:
    """Accuracy of nearest-centroid classification of glyph crops.

    Crops from even-indexed scenes build the class centroids; crops from
    odd-indexed scenes are classified.

    Raises:
        SplurgeContextTransformerParameterError: If a class has no training crop or nothing is left to test
    """
    wanted = {spec.class_id for spec in classes}
    group_of = {spec.class_id: spec.confusion_group for spec in classes}
    train: dict[int, list[np.ndarray]] = {cid: [] for cid in wanted}
    test: list[tuple[int, np.ndarray]] = []
    for index, scene in enumerate(scenes):
        for ann in scene.annotations:
            if ann.class_id not in wanted:
                continue
            crop = crop_glyph(scene.image, ann.box, crop_size)
            if index % 2 == 0:
                train[ann.class_id].append(crop)
            else:
                test.append((ann.class_id, crop))
    empty = [cid for cid, crops in train.items() if not crops]
    if empty or not test:
        raise SplurgeContextTransformerParameterError(
            "Centroid oracle needs crops of every class on both halves", details={"missing": empty}
        )
    ids = sorted(train)
    centroids = np.stack([np.mean(train[cid], axis=0) for cid in ids])

    correct = 0
    group_hits: dict[int, list[bool]] = {}
    for truth, crop in test:
        dist = ((centroids - crop) ** 2).sum(axis=1)
        predicted = ids[int(dist.argmin())]
        correct += predicted == truth
        group = group_of.get(truth)
        if group is not None:
            members = [i for i, cid in enumerate(ids) if group_of.get(cid) == group]
            in_group = ids[members[int(dist[members].argmin())]]
            group_hits.setdefault(group, []).append(in_group == truth)
    return OracleResult(
        accuracy=correct / len(test),
        samples=len(test),
        within_group={group: float(np.mean(hits)) for group, hits in group_hits.items()},
    )
