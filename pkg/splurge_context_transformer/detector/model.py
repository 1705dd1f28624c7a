"""
The detector: backbone, heads and the target pathway chosen by a transfer variant.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from ..anchors import Box, PriorBoxSet, PriorSpec, decode_offsets, generate_priors, nms
from ..context_transformer import (
    ContextOutput,
    ContextTransformerFlags,
    ContextTransformerParams,
    PoolingConfig,
    init_params,
    target_logits,
)
from ..context_transformer import forward as context_forward
from ..exceptions import SplurgeContextTransformerCheckpointError, SplurgeContextTransformerParameterError
from ..logging import configure_module_logging
from ..numerics import Tensor
from ..numerics.checkpoint import Checkpoint
from .backbone import Backbone, backbone_forward, init_conv
from .heads import DetectionHeads, TargetConvHead, heads_forward
from .transfer import TransferConfig, Variant, get_variant

# Module domains
DOMAINS = ["detector", "model", "inference"]

__all__ = [
    "SCORE_THRESHOLD",
    "NMS_THRESHOLD",
    "TOP_K",
    "Detection",
    "ForwardOutput",
    "Detector",
    "detection_scores",
    "decode_detections",
]

SCORE_THRESHOLD = 0.01
NMS_THRESHOLD = 0.45
TOP_K = 200

logger = configure_module_logging("detector.model")


@dataclass(frozen=True)
class Detection:
    box: Box
    class_id: int
    score: float


@dataclass
class ForwardOutput:
    offsets: Tensor
    bg_logits: Tensor
    class_logits: Tensor
    source_scores: Tensor | None = None
    context: ContextOutput | None = None


def detection_scores(bg_logits: np.ndarray, class_logits: np.ndarray) -> np.ndarray:
    """``sigmoid(bg) * softmax(class logits)`` per prior and class."""
    z = np.asarray(bg_logits, dtype=np.float64).reshape(-1, 1)
    objectness = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
    logits = np.asarray(class_logits, dtype=np.float64)
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return objectness * e / e.sum(axis=1, keepdims=True)


def decode_detections(
    offsets: np.ndarray,
    scores: np.ndarray,
    priors: PriorBoxSet,
    class_ids: Sequence[int],
    *,
    score_threshold: float = SCORE_THRESHOLD,
    nms_threshold: float = NMS_THRESHOLD,
    top_k: int = TOP_K,
) -> list[Detection]:
    """Per-class thresholding and NMS, then the ``top_k`` best detections overall."""
    boxes = decode_offsets(offsets, priors.boxes)
    found: list[tuple[float, int, int]] = []
    for c in range(scores.shape[1]):
        candidates = np.flatnonzero(scores[:, c] > score_threshold)
        if candidates.size == 0:
            continue
        for kept in nms(boxes[candidates], scores[candidates, c], nms_threshold, top_k):
            index = int(candidates[kept])
            found.append((float(scores[index, c]), c, index))
    found.sort(key=lambda item: (-item[0], item[1], item[2]))
    return [Detection(Box(*(float(v) for v in boxes[i])), int(class_ids[c]), s) for s, c, i in found[:top_k]]


class Detector:
    """SSD-style detector with a source head set and an optional target pathway.

    ``stage="source"`` classifies with the source OBJ head over the source
    classes. ``stage="target"`` uses the pathway attached by
    :meth:`attach_target`: a conv head (baseline), ``Theta`` on the source
    scores, or ``Theta`` behind the Context-Transformer.
    """

    def __init__(
        self,
        priors: PriorBoxSet,
        backbone: Backbone,
        heads: DetectionHeads,
        source_class_ids: Sequence[int],
    ) -> None:
        self.priors = priors
        self.backbone = backbone
        self.heads = heads
        self.source_class_ids = tuple(int(c) for c in source_class_ids)
        self.target_class_ids: tuple[int, ...] = ()
        self.variant: Variant | None = None
        self.context_params: ContextTransformerParams | None = None
        self.target_head: TargetConvHead | None = None
        self.pooling: PoolingConfig | None = None
        self.global_step = 0

    @classmethod
    def create(
        cls,
        source_class_ids: Sequence[int],
        prior_spec: PriorSpec | None = None,
        *,
        image_size: int = 64,
        seed: int = 0,
    ) -> Detector:
        """Freshly initialized detector for the source classes."""
        priors = generate_priors(prior_spec)
        rng = np.random.default_rng(seed)
        backbone = Backbone.create(rng, image_size)
        heads = DetectionHeads.create(
            rng, backbone.feature_grids(), priors.spec.ratios_per_scale, len(tuple(source_class_ids))
        )
        return cls(priors, backbone, heads, source_class_ids)

    # Target pathway

    @property
    def transfer(self) -> TransferConfig | None:
        return None if self.variant is None else self.variant.transfer

    def attach_target(
        self,
        variant: Variant | str,
        target_class_ids: Sequence[int],
        *,
        pooling: PoolingConfig | None = None,
        flags: ContextTransformerFlags | None = None,
        seed: int = 0,
    ) -> None:
        """Add the target pathway a variant calls for.

        Args:
            variant: Variant or its registered name.
            target_class_ids: Target classes, in target-head index order.
            pooling: Contextual-field pooling (ignored without context).
            flags: Context-Transformer flags overriding the variant's own.
            seed: Seed for the new weights.
        """
        variant = get_variant(variant) if isinstance(variant, str) else variant
        variant.transfer.validate()
        if flags is not None:
            variant = Variant(variant.name, variant.transfer, flags, variant.description)
        variant.flags.validate()
        self.variant = variant
        self.target_class_ids = tuple(int(c) for c in target_class_ids)
        self.pooling = pooling
        rng = np.random.default_rng(seed)
        ratios = self.heads.ratios_per_scale
        transfer = variant.transfer

        if transfer.source_obj == "reinit":
            for k, scale in enumerate(self.heads.scales):
                channels = scale.source_obj.weight.shape[2]
                scale.source_obj = init_conv(
                    f"heads.{k}.source_obj", channels, self.heads.source_classes * ratios[k], rng
                )
        self.target_head = None
        self.context_params = None
        if transfer.target_head == "conv":
            self.target_head = TargetConvHead.create(rng, ratios, len(self.target_class_ids))
        else:
            ct_flags = variant.flags if transfer.context else ContextTransformerFlags(embedding="none", pool="none")
            self.context_params = init_params(
                self.heads.source_classes,
                len(self.target_class_ids),
                ct_flags,
                num_scales=len(ratios),
                seed=int(rng.integers(0, 2**31)),
            )
        logger.debug(f"Attached target pathway for variant '{variant.name}' ({len(self.target_class_ids)} classes)")

    def extra_parameter_count(self) -> int:
        """Weights the target pathway adds on top of the source detector."""
        if self.target_head is not None:
            return sum(p.size for p in self.target_head.parameters())
        if self.context_params is not None:
            return self.context_params.count()
        return 0

    # Parameters

    def named_parameters(self) -> dict[str, Tensor]:
        named: dict[str, Tensor] = {}
        for layer in self.backbone.layers.values():
            for p in layer.parameters():
                named[p.name or ""] = p
        for scale in self.heads.scales:
            for layer in (scale.bbox, scale.bg, scale.source_obj):
                for p in layer.parameters():
                    named[p.name or ""] = p
        if self.target_head is not None:
            for p in self.target_head.parameters():
                named[p.name or ""] = p
        if self.context_params is not None:
            named.update(self.context_params.named_parameters())
        return named

    def trainable_parameters(self, stage: str) -> list[Tensor]:
        """Parameters an optimizer should own for a training stage."""
        if stage == "source":
            return self.backbone.parameters() + [
                p for head in ("bbox", "bg", "source_obj") for p in self.heads.head_parameters(head)
            ]
        transfer = self._require_target()
        params: list[Tensor] = []
        if transfer.trainable("backbone"):
            params.extend(self.backbone.parameters())
        for head in ("bbox", "bg", "source_obj"):
            if transfer.trainable(head):
                params.extend(self.heads.head_parameters(head))
        if self.target_head is not None:
            params.extend(self.target_head.parameters())
        if self.context_params is not None:
            params.extend(self.context_params.parameters())
        return params

    def frozen_parameters(self) -> list[Tensor]:
        """Parameters that fine-tuning must leave bit-identical."""
        transfer = self._require_target()
        frozen: list[Tensor] = []
        if transfer.backbone == "freeze":
            frozen.extend(self.backbone.parameters())
        for head in ("bbox", "bg", "source_obj"):
            if getattr(transfer, head) == "freeze":
                frozen.extend(self.heads.head_parameters(head))
        return frozen

    def _require_target(self) -> TransferConfig:
        if self.variant is None:
            raise SplurgeContextTransformerParameterError("No target pathway attached; call attach_target() first")
        return self.variant.transfer

    # Forward and inference

    def forward(self, image: Tensor | np.ndarray, *, stage: str = "target", inference: bool = False) -> ForwardOutput:
        features = backbone_forward(image, self.backbone)
        if stage == "source":
            out = heads_forward(features, self.heads, self.priors)
            assert out.scores is not None
            return ForwardOutput(out.offsets, out.bg_logits, out.scores.matrix, out.scores.matrix)
        transfer = self._require_target()
        out = heads_forward(features, self.heads, self.priors, with_source_obj=transfer.uses_source_obj)
        source = out.scores.matrix if out.scores is not None else None
        if self.target_head is not None:
            return ForwardOutput(out.offsets, out.bg_logits, self.target_head(features), source)
        assert self.context_params is not None and out.scores is not None
        if not transfer.context:
            logits = target_logits(out.scores.matrix, self.context_params, out.scores.scale_offsets)
            return ForwardOutput(out.offsets, out.bg_logits, logits, source)
        context = context_forward(out.scores, self.context_params, self.pooling, inference=inference)
        return ForwardOutput(out.offsets, out.bg_logits, context.logits, source, context)

    def class_ids(self, stage: str) -> tuple[int, ...]:
        return self.source_class_ids if stage == "source" else self.target_class_ids

    def predict(
        self,
        image: Tensor | np.ndarray,
        *,
        stage: str = "target",
        score_threshold: float = SCORE_THRESHOLD,
        nms_threshold: float = NMS_THRESHOLD,
        top_k: int = TOP_K,
    ) -> list[Detection]:
        """Detections for one image (inference mode, so an unloaded module is skipped)."""
        out = self.forward(image, stage=stage, inference=True)
        scores = detection_scores(out.bg_logits.data, out.class_logits.data)
        return decode_detections(
            out.offsets.data,
            scores,
            self.priors,
            self.class_ids(stage),
            score_threshold=score_threshold,
            nms_threshold=nms_threshold,
            top_k=top_k,
        )

    # Persistence

    def metadata(self) -> dict[str, Any]:
        spec = self.priors.spec
        meta: dict[str, Any] = {
            "image_size": self.backbone.image_size,
            "prior_spec": {
                "grids": [list(g) for g in spec.grids],
                "aspect_ratios": [list(r) for r in spec.aspect_ratios],
                "base_sizes": list(spec.base_sizes),
            },
            "source_classes": list(self.source_class_ids),
            "target_classes": list(self.target_class_ids),
        }
        if self.variant is not None:
            meta["variant"] = self.variant.name
            meta["flags"] = self.variant.flags.to_dict()
        if self.pooling is not None:
            meta["pooling"] = self.pooling.to_dict()
        return meta

    def to_checkpoint(self, extra: dict[str, Any] | None = None) -> Checkpoint:
        arrays = {name: np.array(t.data, copy=True) for name, t in self.named_parameters().items()}
        return Checkpoint(tensors=arrays, global_step=self.global_step, metadata={**self.metadata(), **(extra or {})})

    def load_arrays(self, arrays: dict[str, np.ndarray], *, strict: bool = True) -> None:
        """Copy named arrays into the matching parameters.

        Raises:
            SplurgeContextTransformerCheckpointError: On a missing name (strict) or a shape mismatch
        """
        named = self.named_parameters()
        missing = sorted(set(named) - set(arrays))
        if strict and missing:
            raise SplurgeContextTransformerCheckpointError(
                "Checkpoint is missing parameters", details={"missing": missing[:10], "count": len(missing)}
            )
        for name, tensor in named.items():
            if name not in arrays:
                continue
            if tuple(arrays[name].shape) != tensor.shape:
                raise SplurgeContextTransformerCheckpointError(
                    f"Shape mismatch for '{name}': checkpoint {arrays[name].shape}, model {tensor.shape}"
                )
            tensor.assign(arrays[name])

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint, *, seed: int = 0) -> Detector:
        """Rebuild a detector (and its target pathway, if recorded) from a checkpoint."""
        meta = checkpoint.metadata
        try:
            spec_meta = meta["prior_spec"]
            spec = PriorSpec(
                tuple(tuple(int(v) for v in g) for g in spec_meta["grids"]),  # type: ignore[misc]
                tuple(tuple(float(r) for r in ratios) for ratios in spec_meta["aspect_ratios"]),
                tuple(float(s) for s in spec_meta["base_sizes"]),
            )
            detector = cls.create(meta["source_classes"], spec, image_size=int(meta["image_size"]), seed=seed)
        except (KeyError, TypeError, ValueError) as exc:
            raise SplurgeContextTransformerCheckpointError(f"Checkpoint metadata incomplete: {exc}") from exc
        if meta.get("variant"):
            pooling = PoolingConfig.from_dict(meta["pooling"]) if meta.get("pooling") else None
            flags = ContextTransformerFlags(**meta["flags"]) if meta.get("flags") else None
            detector.attach_target(meta["variant"], meta["target_classes"], pooling=pooling, flags=flags, seed=seed)
        detector.load_arrays(checkpoint.tensors, strict=True)
        detector.global_step = checkpoint.global_step
        return detector
