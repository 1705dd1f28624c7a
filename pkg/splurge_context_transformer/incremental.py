"""
Incremental few-shot detection.

The pretrained source OBJ head is kept and gets a residual adapter
``P + P W_a`` (``W_a`` zero at start, so source scores are untouched until
training moves it). Target logits come from the Context-Transformer
pathway on the original ``P``. The two logit blocks are concatenated and
one softmax runs over all ``C_s + C_t`` classes.

Fine-tuning replays ``N`` scenes per source class next to the ``N``-shot
target episode.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .anchors import PriorBoxSet
from .context_transformer import (
    ContextOutput,
    ContextTransformerFlags,
    ContextTransformerParams,
    PoolingConfig,
    SourceScoreSet,
    init_params,
)
from .context_transformer import forward as context_forward
from .detector import (
    METRICS_FILE,
    NMS_THRESHOLD,
    SCORE_THRESHOLD,
    TOP_K,
    Detection,
    Detector,
    ForwardOutput,
    LossTerms,
    TrainingResult,
    TrainingSample,
    TrainSettings,
    backbone_forward,
    decode_detections,
    detection_scores,
    heads_forward,
    multibox_terms,
    prepare_samples,
    sample_view,
    train_detector,
)
from .exceptions import (
    SplurgeContextTransformerCheckpointError,
    SplurgeContextTransformerDimensionError,
    SplurgeContextTransformerParameterError,
)
from .logging import configure_module_logging, performance_context
from .numerics import Checkpoint, Tensor, add, concat_cols, matmul, save_checkpoint, softmax_rows
from .numerics.tensor import get_dtype
from .synthdata import ClassSpec, Scene, Xoshiro256StarStar, derive_seed, sample_training_scenes

# Module domains
DOMAINS = ["incremental", "adapter", "replay"]

__all__ = [
    "ADAPTER_NAME",
    "IncrementalParams",
    "IncrementalOutput",
    "IncrementalModel",
    "init_incremental_params",
    "incremental_forward",
    "build_incremental_trainset",
    "fine_tune_incremental",
]

ADAPTER_NAME = "incremental.adapter"

logger = configure_module_logging("incremental")


@dataclass
class IncrementalParams:
    """Residual adapter over the source OBJ scores plus the target pathway's parameters."""

    adapter: Tensor
    context: ContextTransformerParams

    @property
    def source_classes(self) -> int:
        return int(self.adapter.shape[0])

    @property
    def target_classes(self) -> int:
        return self.context.target_classes

    @property
    def joint_classes(self) -> int:
        return self.source_classes + self.target_classes

    def parameters(self) -> list[Tensor]:
        return [self.adapter, *self.context.parameters()]

    def named_parameters(self) -> dict[str, Tensor]:
        return {ADAPTER_NAME: self.adapter, **self.context.named_parameters()}

    def count(self) -> int:
        return self.adapter.size + self.context.count()


def init_incremental_params(
    source_classes: int,
    target_classes: int,
    flags: ContextTransformerFlags | None = None,
    *,
    seed: int = 0,
) -> IncrementalParams:
    """Zero adapter and a fresh Context-Transformer.

    Raises:
        SplurgeContextTransformerParameterError: If the flags ask for per-scale Theta
    """
    flags = flags or ContextTransformerFlags()
    if flags.theta != "shared":
        raise SplurgeContextTransformerParameterError("Incremental detection uses a shared Theta")
    adapter = Tensor(
        np.zeros((source_classes, source_classes)), requires_grad=True, dtype=get_dtype(), name=ADAPTER_NAME
    )
    return IncrementalParams(adapter, init_params(source_classes, target_classes, flags, seed=seed))


@dataclass
class IncrementalOutput:
    logits: Tensor
    probabilities: Tensor
    source_logits: Tensor
    target: ContextOutput


def incremental_forward(
    scores: SourceScoreSet,
    params: IncrementalParams,
    pooling: PoolingConfig | None = None,
    *,
    inference: bool = False,
) -> IncrementalOutput:
    """Joint ``D_p x (C_s + C_t)`` logits ``[P + P W_a | P^ Theta]`` and their row softmax.

    Raises:
        SplurgeContextTransformerDimensionError: If ``P`` does not have ``C_s`` columns
    """
    p = scores.matrix
    if p.ndim != 2 or p.shape[1] != params.source_classes:
        raise SplurgeContextTransformerDimensionError(
            f"incremental: P {p.shape} does not match adapter {params.adapter.shape}"
        )
    source = add(p, matmul(p, params.adapter))
    target = context_forward(scores, params.context, pooling, inference=inference)
    logits = concat_cols([source, target.logits])
    return IncrementalOutput(logits, softmax_rows(logits), source, target)


def build_incremental_trainset(
    source_classes: Sequence[ClassSpec],
    target_train: Sequence[Scene],
    shots: int,
    seed: int,
    *,
    image_size: int | None = None,
    workers: int = 1,
) -> tuple[Scene, ...]:
    """``shots`` scenes per source class plus the target episode's scenes, in a seeded shuffled order.

    The source replay depends on ``seed``; the target scenes are used as given.
    """
    if shots < 1:
        raise SplurgeContextTransformerParameterError(f"Shots per class must be >= 1, got {shots}")
    size = image_size or (int(target_train[0].image.shape[0]) if target_train else 64)
    replay = sample_training_scenes(source_classes, shots, derive_seed(seed, 0x1C), image_size=size, workers=workers)
    mixed = [*replay, *target_train]
    order = Xoshiro256StarStar(derive_seed(seed, 0x5F)).permutation(len(mixed))
    logger.debug(f"Incremental train set: {len(replay)} source replay + {len(target_train)} target scenes")
    return tuple(mixed[i] for i in order)


class IncrementalModel:
    """A pretrained detector extended with a joint source + target classifier."""

    def __init__(
        self,
        detector: Detector,
        params: IncrementalParams,
        target_class_ids: Sequence[int],
        pooling: PoolingConfig | None = None,
    ) -> None:
        if params.source_classes != len(detector.source_class_ids):
            raise SplurgeContextTransformerDimensionError(
                f"Adapter is {params.adapter.shape}, detector has {len(detector.source_class_ids)} source classes"
            )
        self.detector = detector
        self.params = params
        self.target_class_ids = tuple(int(c) for c in target_class_ids)
        self.pooling = pooling

    @classmethod
    def create(
        cls,
        detector: Detector,
        target_class_ids: Sequence[int],
        *,
        flags: ContextTransformerFlags | None = None,
        pooling: PoolingConfig | None = None,
        seed: int = 0,
    ) -> IncrementalModel:
        params = init_incremental_params(len(detector.source_class_ids), len(target_class_ids), flags, seed=seed)
        return cls(detector, params, target_class_ids, pooling)

    @property
    def class_ids(self) -> tuple[int, ...]:
        return self.detector.source_class_ids + self.target_class_ids

    @property
    def priors(self) -> PriorBoxSet:
        return self.detector.priors

    @property
    def global_step(self) -> int:
        return self.detector.global_step

    @global_step.setter
    def global_step(self, value: int) -> None:
        self.detector.global_step = value

    def parameters(self) -> list[Tensor]:
        """Everything fine-tuned in incremental mode: backbone, all source heads, adapter and target pathway."""
        return self.detector.trainable_parameters("source") + self.params.parameters()

    def named_parameters(self) -> dict[str, Tensor]:
        return {**self.detector.named_parameters(), **self.params.named_parameters()}

    def forward(self, image: Tensor | np.ndarray, *, inference: bool = False) -> ForwardOutput:
        features = backbone_forward(image, self.detector.backbone)
        out = heads_forward(features, self.detector.heads, self.detector.priors)
        assert out.scores is not None
        joint = incremental_forward(out.scores, self.params, self.pooling, inference=inference)
        return ForwardOutput(out.offsets, out.bg_logits, joint.logits, out.scores.matrix, joint.target)

    def predict(
        self,
        image: Tensor | np.ndarray,
        *,
        score_threshold: float = SCORE_THRESHOLD,
        nms_threshold: float = NMS_THRESHOLD,
        top_k: int = TOP_K,
    ) -> list[Detection]:
        out = self.forward(image, inference=True)
        scores = detection_scores(out.bg_logits.data, out.class_logits.data)
        return decode_detections(
            out.offsets.data,
            scores,
            self.detector.priors,
            self.class_ids,
            score_threshold=score_threshold,
            nms_threshold=nms_threshold,
            top_k=top_k,
        )

    def to_checkpoint(self, extra: dict[str, Any] | None = None) -> Checkpoint:
        arrays = {name: np.array(t.data, copy=True) for name, t in self.named_parameters().items()}
        meta = {
            **self.detector.metadata(),
            "incremental": {
                "target_classes": list(self.target_class_ids),
                "flags": self.params.context.flags.to_dict(),
                "pooling": None if self.pooling is None else self.pooling.to_dict(),
            },
            **(extra or {}),
        }
        return Checkpoint(tensors=arrays, global_step=self.global_step, metadata=meta)

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint, *, seed: int = 0) -> IncrementalModel:
        """Rebuild from a checkpoint written by :meth:`to_checkpoint`.

        Raises:
            SplurgeContextTransformerCheckpointError: If the checkpoint holds no incremental pathway
        """
        section = checkpoint.metadata.get("incremental")
        if not section:
            raise SplurgeContextTransformerCheckpointError("Checkpoint does not hold an incremental model")
        detector = Detector.from_checkpoint(checkpoint, seed=seed)
        model = cls.create(
            detector,
            section["target_classes"],
            flags=ContextTransformerFlags(**section["flags"]),
            pooling=PoolingConfig.from_dict(section["pooling"]) if section.get("pooling") else None,
            seed=seed,
        )
        named = model.params.named_parameters()
        missing = sorted(set(named) - set(checkpoint.tensors))
        if missing:
            raise SplurgeContextTransformerCheckpointError(
                "Checkpoint is missing incremental parameters", details={"missing": missing}
            )
        for name, tensor in named.items():
            tensor.assign(checkpoint.tensors[name])
        return model


def fine_tune_incremental(
    model: IncrementalModel,
    scenes: Sequence[Scene],
    settings: TrainSettings,
    *,
    out_dir: Path | None = None,
    checkpoint_name: str = "incremental.ckpt",
) -> TrainingResult:
    """Fine-tune the joint classifier on replayed source shots plus target shots.

    Every source head keeps training so the adapter and the backbone can
    absorb the new classes without a frozen copy of the old detector.
    """
    samples = prepare_samples(scenes, model.priors, model.class_ids, flip=settings.flip)

    def loss_fn(sample: TrainingSample, flipped: bool) -> LossTerms | None:
        image, targets = sample_view(sample, flipped)
        out = model.forward(Tensor(image))
        return multibox_terms(out.offsets, out.bg_logits, out.class_logits, targets)

    metrics = out_dir / METRICS_FILE if out_dir is not None else None
    with performance_context("fine_tune_incremental", steps=settings.steps, scenes=len(scenes)):
        result = train_detector(
            model,
            samples,
            settings,
            stage="incremental",
            parameters=model.parameters(),
            loss_fn=loss_fn,
            metrics_path=metrics,
        )
    if out_dir is not None:
        result.checkpoint_path = save_checkpoint(
            out_dir / checkpoint_name, model.to_checkpoint({"stage": "incremental"})
        )
    return result
