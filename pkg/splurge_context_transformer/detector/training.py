"""
Training loops for source pretraining and target fine-tuning.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

import json
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from ..anchors import PriorBoxSet, match_priors
from ..exceptions import SplurgeContextTransformerNumericalError, SplurgeContextTransformerParameterError
from ..logging import configure_module_logging, performance_context
from ..numerics import SGD, OptimizerState, Tensor, save_checkpoint
from ..synthdata import Scene, Xoshiro256StarStar, flip_scene
from ..utils.file_io_adapter import FileIoAdapter
from .loss import LossBreakdown, LossTerms, MatchedTargets, combine_losses, multibox_terms, prepare_targets
from .model import Detector, ForwardOutput

# Module domains
DOMAINS = ["detector", "training", "optimization"]

__all__ = [
    "METRICS_FILE",
    "TrainSettings",
    "TrainingResult",
    "TrainingSample",
    "TrainableModel",
    "LossFn",
    "prepare_samples",
    "sample_view",
    "train_detector",
    "pretrain_source",
    "fine_tune",
]

METRICS_FILE = "metrics.jsonl"
TREND_WINDOW = 100

logger = configure_module_logging("detector.training")


@dataclass(frozen=True)
class TrainSettings:
    """Run length and optimizer hyperparameters for one training stage."""

    steps: int
    learning_rate: float
    milestones: tuple[int, ...] = ()
    decay: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 16
    log_every: int = 50
    flip: bool = True
    seed: int = 0

    def validate(self) -> None:
        problems = []
        if self.steps <= 0:
            problems.append(f"steps must be positive, got {self.steps}")
        if not self.learning_rate > 0:
            problems.append(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            problems.append(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size <= 0:
            problems.append(f"batch_size must be positive, got {self.batch_size}")
        if problems:
            raise SplurgeContextTransformerParameterError("; ".join(problems), details={"problems": problems})

    def optimizer_state(self) -> OptimizerState:
        return OptimizerState(
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            schedule=tuple((int(m), self.decay) for m in sorted(self.milestones)),
        )


@dataclass
class TrainingResult:
    stage: str
    steps: int
    losses: list[float] = field(default_factory=list)
    skipped: int = 0
    final_lr: float = 0.0
    checkpoint_path: Path | None = None

    def loss_decreased(self, window: int = TREND_WINDOW) -> bool:
        """Mean of the last ``window`` losses is below the mean of the first ``window``."""
        if len(self.losses) < 2:
            return False
        window = min(window, len(self.losses) // 2)
        return float(np.mean(self.losses[-window:])) < float(np.mean(self.losses[:window]))


@dataclass(frozen=True)
class TrainingSample:
    """A scene's image and matched targets, plus the mirrored version for flip augmentation."""

    image: np.ndarray
    targets: MatchedTargets
    flipped_image: np.ndarray | None = None
    flipped_targets: MatchedTargets | None = None


def _targets_for(scene: Scene, priors: PriorBoxSet, label_of: dict[int, int]) -> MatchedTargets:
    try:
        labels = [label_of[a.class_id] for a in scene.annotations]
    except KeyError as exc:
        raise SplurgeContextTransformerParameterError(
            f"Scene {scene.scene_id} holds class {exc.args[0]} outside the trained class list"
        ) from None
    match = match_priors(scene.boxes, priors)
    return prepare_targets(match, scene.boxes, labels, priors)


def prepare_samples(
    scenes: Sequence[Scene], priors: PriorBoxSet, class_ids: Sequence[int], *, flip: bool = True
) -> list[TrainingSample]:
    """Match every scene (and its mirror image when ``flip``) against the priors once."""
    label_of = {cid: i for i, cid in enumerate(class_ids)}
    samples = []
    for scene in scenes:
        targets = _targets_for(scene, priors, label_of)
        if flip:
            mirrored = flip_scene(scene)
            samples.append(
                TrainingSample(scene.image, targets, mirrored.image, _targets_for(mirrored, priors, label_of))
            )
        else:
            samples.append(TrainingSample(scene.image, targets))
    return samples


class _BatchSampler:
    """Cycles through seeded permutations of the sample indices."""

    def __init__(self, size: int, seed: int) -> None:
        self._rng = Xoshiro256StarStar(seed)
        self._size = size
        self._queue: list[int] = []

    def draw(self, count: int) -> list[tuple[int, bool]]:
        batch = []
        for _ in range(count):
            if not self._queue:
                self._queue = self._rng.permutation(self._size)
            batch.append((self._queue.pop(), self._rng.random() < 0.5))
        return batch


LossFn = Callable[[TrainingSample, bool], "LossTerms | None"]


class TrainableModel(Protocol):
    global_step: int


def sample_view(sample: TrainingSample, flipped: bool) -> tuple[np.ndarray, MatchedTargets]:
    """The image and targets to train on, mirrored when ``flipped`` and a mirror exists."""
    if flipped and sample.flipped_image is not None and sample.flipped_targets is not None:
        return sample.flipped_image, sample.flipped_targets
    return sample.image, sample.targets


def _default_loss(detector: Detector, stage: str) -> LossFn:
    def loss_fn(sample: TrainingSample, flipped: bool) -> LossTerms | None:
        image, targets = sample_view(sample, flipped)
        out: ForwardOutput = detector.forward(Tensor(image), stage=stage)
        return multibox_terms(out.offsets, out.bg_logits, out.class_logits, targets)

    return loss_fn


def train_detector(
    detector: TrainableModel,
    samples: Sequence[TrainingSample],
    settings: TrainSettings,
    *,
    stage: str,
    parameters: Sequence[Tensor] | None = None,
    loss_fn: LossFn | None = None,
    metrics_path: Path | None = None,
) -> TrainingResult:
    """Momentum-SGD over random mini-batches.

    Batches without positive priors are skipped and counted. Metrics go to
    ``metrics_path`` as one JSON object per step.

    Raises:
        SplurgeContextTransformerNumericalError: If a loss is NaN or infinite
    """
    settings.validate()
    if not samples:
        raise SplurgeContextTransformerParameterError("Training needs at least one scene")
    if parameters is None or loss_fn is None:
        if not isinstance(detector, Detector):
            raise SplurgeContextTransformerParameterError(
                "Models other than Detector need explicit parameters and loss_fn"
            )
        parameters = parameters if parameters is not None else detector.trainable_parameters(stage)
        loss_fn = loss_fn or _default_loss(detector, stage)
    optimizer = SGD(list(parameters), settings.optimizer_state())
    sampler = _BatchSampler(len(samples), settings.seed)
    result = TrainingResult(stage=stage, steps=settings.steps)
    last_finite: float | None = None

    for step in range(settings.steps):
        batch = sampler.draw(settings.batch_size)
        terms = [loss_fn(samples[index], flipped and settings.flip) for index, flipped in batch]
        loss: LossBreakdown | None = combine_losses(terms)
        lr = optimizer.current_lr
        if loss is None:
            result.skipped += 1
            optimizer.step_index += 1
            continue
        value = loss.value
        if not math.isfinite(value):
            raise SplurgeContextTransformerNumericalError(
                f"Non-finite loss at step {step} of {stage} training",
                details={"step": step, "last_finite_loss": last_finite, "lr": lr},
            )
        last_finite = value
        optimizer.zero_grad()
        loss.total.backward()
        optimizer.step()
        detector.global_step += 1
        result.losses.append(value)
        if metrics_path is not None:
            record = {
                "stage": stage,
                "step": step,
                "loss": value,
                "loss_loc": loss.loc,
                "loss_bg": loss.bg,
                "loss_cls": loss.cls,
                "lr": lr,
                "skipped": result.skipped,
            }
            FileIoAdapter.append_line(metrics_path, json.dumps(record), context_type="metrics")
        if settings.log_every and (step % settings.log_every == 0 or step == settings.steps - 1):
            logger.info(
                f"[{stage}] step {step}/{settings.steps} loss={value:.4f} "
                f"(loc={loss.loc:.4f} bg={loss.bg:.4f} cls={loss.cls:.4f}) lr={lr:.2e}"
            )
    result.final_lr = optimizer.current_lr
    return result


def pretrain_source(
    detector: Detector,
    scenes: Sequence[Scene],
    settings: TrainSettings,
    *,
    out_dir: Path | None = None,
    checkpoint_name: str = "source.ckpt",
) -> TrainingResult:
    """Train backbone and source heads on source-domain scenes; persist a checkpoint under ``out_dir``."""
    if any(scene.domain != "source" for scene in scenes):
        raise SplurgeContextTransformerParameterError("Source pretraining accepts source-domain scenes only")
    samples = prepare_samples(scenes, detector.priors, detector.source_class_ids, flip=settings.flip)
    metrics = out_dir / METRICS_FILE if out_dir is not None else None
    with performance_context("pretrain_source", steps=settings.steps, scenes=len(scenes)):
        result = train_detector(detector, samples, settings, stage="source", metrics_path=metrics)
    if out_dir is not None:
        result.checkpoint_path = save_checkpoint(out_dir / checkpoint_name, detector.to_checkpoint({"stage": "source"}))
    return result


def fine_tune(
    detector: Detector,
    scenes: Sequence[Scene],
    settings: TrainSettings,
    *,
    out_dir: Path | None = None,
    checkpoint_name: str = "target.ckpt",
) -> TrainingResult:
    """Fine-tune the attached target pathway (and the heads its variant leaves trainable)."""
    samples = prepare_samples(scenes, detector.priors, detector.target_class_ids, flip=settings.flip)
    metrics = out_dir / METRICS_FILE if out_dir is not None else None
    variant = detector.variant.name if detector.variant is not None else "?"
    with performance_context("fine_tune", variant=variant, steps=settings.steps, scenes=len(scenes)):
        result = train_detector(detector, samples, settings, stage="target", metrics_path=metrics)
    if out_dir is not None:
        result.checkpoint_path = save_checkpoint(out_dir / checkpoint_name, detector.to_checkpoint({"stage": "target"}))
    return result
