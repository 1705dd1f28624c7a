"""
Typed view of a validated configuration dictionary.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

from ..anchors import PriorSpec
from ..context_transformer import ContextTransformerFlags, PoolingConfig
from ..detector import TrainSettings, Variant, get_variant
from ..exceptions import SplurgeContextTransformerConfigurationError, SplurgeContextTransformerParameterError
from .config import get_default_config, merge_config, validate_config

# Module domains
DOMAINS = ["config", "experiment"]

__all__ = [
    "BenchmarkConfig",
    "EpisodeConfig",
    "OptimizerConfig",
    "VariantFlags",
    "EvaluationConfig",
    "RunConfig",
    "ExperimentConfig",
]


@dataclass(frozen=True)
class BenchmarkConfig:
    image_size: int
    grids: tuple[tuple[int, int], ...]
    aspect_ratios: tuple[float, ...]
    base_sizes: tuple[float, ...]
    source_scenes: int
    source_test_scenes: int
    test_scenes: int
    test_seed: int

    def prior_spec(self) -> PriorSpec:
        return PriorSpec.uniform(self.grids, self.aspect_ratios, self.base_sizes)


@dataclass(frozen=True)
class EpisodeConfig:
    shots: int
    trial: int
    trials: int
    shot_sweep: tuple[int, ...]


@dataclass(frozen=True)
class OptimizerConfig:
    steps: int
    learning_rate: float
    milestones: tuple[int, ...]
    decay: float
    momentum: float
    weight_decay: float
    batch_size: int


@dataclass(frozen=True)
class VariantFlags:
    """Variant name plus optional per-flag overrides (``None`` keeps the variant's value)."""

    name: str
    pool: str | None = None
    embedding: str | None = None
    metric: str | None = None
    theta: str | None = None
    mode: str | None = None
    pooling_kernels: tuple[int, ...] = (2, 2, 0)
    ceil_mode: bool = True


@dataclass(frozen=True)
class EvaluationConfig:
    interpolation: str = "all-point"
    iou_threshold: float = 0.5
    score_floor: float = 0.3


@dataclass(frozen=True)
class RunConfig:
    seed: int
    out_dir: str
    log_level: str
    precision: str
    workers: int
    log_every: int
    flip: bool


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run depends on besides its input checkpoints."""

    run: RunConfig
    benchmark: BenchmarkConfig
    episode: EpisodeConfig
    variant: VariantFlags
    pretrain: OptimizerConfig
    finetune: OptimizerConfig
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    @classmethod
    def from_dict(cls, data: dict[str, Any], *, validate: bool = True, command: str | None = None) -> ExperimentConfig:
        """Build from a (possibly partial) configuration dictionary; missing keys take defaults.

        Raises:
            SplurgeContextTransformerConfigValidationError: If validation is on and the settings are invalid
        """
        merged = merge_config(get_default_config(), data)
        if validate:
            validate_config(merged, command=command)
        bench = merged["benchmark"]
        variant = merged["variant"]
        return cls(
            run=RunConfig(
                seed=int(merged["seed"]),
                out_dir=str(merged["out_dir"]),
                log_level=str(merged["log_level"]).upper(),
                precision=str(merged["precision"]),
                workers=int(merged["workers"]),
                log_every=int(merged["log_every"]),
                flip=bool(merged["flip"]),
            ),
            benchmark=BenchmarkConfig(
                image_size=int(bench["image_size"]),
                grids=tuple((int(g[0]), int(g[1])) for g in bench["grids"]),
                aspect_ratios=tuple(float(r) for r in bench["aspect_ratios"]),
                base_sizes=tuple(float(s) for s in bench["base_sizes"]),
                source_scenes=int(bench["source_scenes"]),
                source_test_scenes=int(bench["source_test_scenes"]),
                test_scenes=int(bench["test_scenes"]),
                test_seed=int(bench["test_seed"]),
            ),
            episode=EpisodeConfig(
                shots=int(merged["episode"]["shots"]),
                trial=int(merged["episode"]["trial"]),
                trials=int(merged["episode"]["trials"]),
                shot_sweep=tuple(int(n) for n in merged["episode"]["shot_sweep"]),
            ),
            variant=VariantFlags(
                name=str(variant["name"]),
                pool=variant.get("pool"),
                embedding=variant.get("embedding"),
                metric=variant.get("metric"),
                theta=variant.get("theta"),
                mode=variant.get("mode"),
                pooling_kernels=tuple(int(k) for k in variant["pooling_kernels"]),
                ceil_mode=bool(variant["ceil_mode"]),
            ),
            pretrain=_optimizer(merged["pretrain"]),
            finetune=_optimizer(merged["finetune"]),
            evaluation=EvaluationConfig(
                interpolation=str(merged["evaluation"]["interpolation"]),
                iou_threshold=float(merged["evaluation"]["iou_threshold"]),
                score_floor=float(merged["evaluation"]["score_floor"]),
            ),
        )

    def to_dict(self) -> dict[str, Any]:
        """Plain JSON-ready dictionary; ``from_dict(to_dict())`` gives back an equal config."""
        return {
            **asdict(self.run),
            "benchmark": {
                **asdict(self.benchmark),
                "grids": [list(g) for g in self.benchmark.grids],
                "aspect_ratios": list(self.benchmark.aspect_ratios),
                "base_sizes": list(self.benchmark.base_sizes),
            },
            "episode": {**asdict(self.episode), "shot_sweep": list(self.episode.shot_sweep)},
            "variant": {**asdict(self.variant), "pooling_kernels": list(self.variant.pooling_kernels)},
            "pretrain": {**asdict(self.pretrain), "milestones": list(self.pretrain.milestones)},
            "finetune": {**asdict(self.finetune), "milestones": list(self.finetune.milestones)},
            "evaluation": asdict(self.evaluation),
        }

    # Derived objects

    @property
    def out_dir(self) -> Path:
        return Path(self.run.out_dir)

    def with_overrides(self, **sections: Any) -> ExperimentConfig:
        """Copy with whole sections or run fields replaced, e.g. ``with_overrides(seed=3)``."""
        run_fields = {k: v for k, v in sections.items() if k in RunConfig.__dataclass_fields__}
        other = {k: v for k, v in sections.items() if k not in run_fields}
        return replace(self, run=replace(self.run, **run_fields), **other)

    def resolve_variant(self, name: str | None = None) -> Variant:
        """The named variant, with this config's flag overrides applied when it is the configured one.

        Raises:
            SplurgeContextTransformerConfigurationError: If the resulting flags are invalid
        """
        variant = get_variant(name or self.variant.name)
        changes: dict[str, str] = {}
        if variant.name == self.variant.name:
            changes = {
                key: getattr(self.variant, key)
                for key in ("pool", "embedding", "metric", "theta", "mode")
                if getattr(self.variant, key) is not None
            }
        flags = replace(variant.flags, **changes) if changes else variant.flags
        try:
            flags.validate()
        except SplurgeContextTransformerParameterError as exc:
            raise SplurgeContextTransformerConfigurationError(str(exc)) from exc
        return Variant(variant.name, variant.transfer, flags, variant.description)

    def flags(self, name: str | None = None) -> ContextTransformerFlags:
        return self.resolve_variant(name).flags

    def pooling(self) -> PoolingConfig:
        kind = self.flags().pool
        return PoolingConfig.from_kernels(
            [k or None for k in self.variant.pooling_kernels],
            kind="max" if kind == "none" else kind,
            ceil_mode=self.variant.ceil_mode,
        )

    def train_settings(self, stage: str, *, seed: int | None = None) -> TrainSettings:
        """Training settings for ``"pretrain"`` or ``"finetune"``."""
        opt = self.pretrain if stage == "pretrain" else self.finetune
        return TrainSettings(
            steps=opt.steps,
            learning_rate=opt.learning_rate,
            milestones=opt.milestones,
            decay=opt.decay,
            momentum=opt.momentum,
            weight_decay=opt.weight_decay,
            batch_size=opt.batch_size,
            log_every=self.run.log_every,
            flip=self.run.flip,
            seed=self.run.seed if seed is None else seed,
        )


def _optimizer(section: dict[str, Any]) -> OptimizerConfig:
    return OptimizerConfig(
        steps=int(section["steps"]),
        learning_rate=float(section["learning_rate"]),
        milestones=tuple(int(m) for m in section["milestones"]),
        decay=float(section["decay"]),
        momentum=float(section["momentum"]),
        weight_decay=float(section["weight_decay"]),
        batch_size=int(section["batch_size"]),
    )
