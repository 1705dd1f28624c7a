"""
Shared entry points for CLI and API consumers.

One function per command. Each takes a validated ``ExperimentConfig``
(plus the checkpoints it depends on), writes every artifact under the
configured output directory with the configuration embedded as
``config.json``, and returns a typed result.

These functions raise library exceptions on fatal errors so API
consumers can handle them programmatically. The CLI catches them and
translates them to exit codes.

Training runs in the configured precision; evaluation always runs on a
double-precision copy of the weights so reports are reproducible bit for bit.
"""

from __future__ import annotations

import contextvars
import itertools
import json
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any

from .config import CONFIG_FILE_NAME, ExperimentConfig, save_config
from .detector import TABLE_ROWS, Detector, Variant, fine_tune, pretrain_source
from .diagnostics import DEFAULT_DRAWS, context_affinity_statistic, context_dependent_classes, run_gradient_suite
from .evaluation import EvalReport, Predictor, evaluate_model
from .exceptions import SplurgeContextTransformerCheckpointError, SplurgeContextTransformerParameterError
from .incremental import IncrementalModel, build_incremental_trainset, fine_tune_incremental
from .logging import configure_module_logging, get_contextual_logger, performance_context
from .numerics import Checkpoint, load_checkpoint, precision
from .result_models import (
    AblationEntry,
    AblationRunResult,
    EvalRunResult,
    GenDataResult,
    GradcheckRunResult,
    IncrementalRunResult,
    TrainRunResult,
    finite_or_none,
    result_to_dict,
)
from .synthdata import (
    Benchmark,
    ClassSpec,
    Episode,
    EpisodeSpec,
    Scene,
    build_source_scenes,
    centroid_oracle_accuracy,
    default_benchmark,
    derive_seed,
    dump_scenes,
    sample_episode,
    sample_test_scenes,
)
from .utils import FileIoAdapter

# Module domains
DOMAINS = ["api", "experiments", "orchestration"]

__all__ = [
    "SOURCE_EVAL_FILE",
    "EVAL_FILE",
    "ABLATION_FILE",
    "GRADCHECK_FILE",
    "INCREMENTAL_FILE",
    "prepare_output_dir",
    "load_detector",
    "source_test_scenes",
    "target_episode",
    "run_pretrain",
    "run_finetune",
    "run_eval",
    "run_incremental",
    "run_gradcheck",
    "run_ablate",
    "check_transfer_ordering",
    "check_shot_trend",
    "run_gen_data",
]

SOURCE_EVAL_FILE = "source_eval.json"
EVAL_FILE = "eval.json"
ABLATION_FILE = "ablation.json"
GRADCHECK_FILE = "gradcheck.json"
INCREMENTAL_FILE = "incremental.json"

# Seed components keeping the random streams of a run apart
_SOURCE_TRAIN_STREAM = 0x51
_SOURCE_TEST_STREAM = 0x52
_TARGET_INIT_STREAM = 0x7A
_INCREMENTAL_STREAM = 0x1C

logger = configure_module_logging("main")


# Shared plumbing


def prepare_output_dir(config: ExperimentConfig, *parts: str) -> Path:
    """Create the run directory and embed the configuration in it."""
    out = config.out_dir.joinpath(*parts)
    save_config(config.to_dict(), out / CONFIG_FILE_NAME)
    return out


def load_detector(path: str | Path) -> Detector:
    """Rebuild a detector from a checkpoint file.

    Raises:
        SplurgeContextTransformerFileError: If the checkpoint is missing or unreadable
    """
    return Detector.from_checkpoint(_read_checkpoint(path))


def _read_checkpoint(path: str | Path) -> Checkpoint:
    resolved = FileIoAdapter.require_file(path, context_type="checkpoint")
    return load_checkpoint(resolved)


def _class_names(benchmark: Benchmark) -> dict[int, str]:
    return {spec.class_id: spec.name for spec in (*benchmark.source, *benchmark.target)}


def _class_ids(classes: Sequence[ClassSpec]) -> list[int]:
    return [spec.class_id for spec in classes]


def _select(classes: Sequence[ClassSpec], class_ids: Sequence[int]) -> tuple[ClassSpec, ...]:
    wanted = set(class_ids)
    return tuple(spec for spec in classes if spec.class_id in wanted)


def source_test_scenes(config: ExperimentConfig, benchmark: Benchmark) -> tuple[Scene, ...]:
    bench = config.benchmark
    return build_source_scenes(
        benchmark.source,
        bench.source_test_scenes,
        derive_seed(bench.test_seed, _SOURCE_TEST_STREAM),
        bench.image_size,
        workers=config.run.workers,
    )


def target_episode(
    config: ExperimentConfig,
    benchmark: Benchmark,
    *,
    shots: int | None = None,
    trial: int | None = None,
) -> Episode:
    """The configured N-shot episode over the target classes."""
    spec = EpisodeSpec(
        shots=config.episode.shots if shots is None else shots,
        classes=benchmark.target,
        seed=config.run.seed,
        trial=config.episode.trial if trial is None else trial,
        test_scenes=config.benchmark.test_scenes,
        test_seed=config.benchmark.test_seed,
        image_size=config.benchmark.image_size,
    )
    return sample_episode(spec, workers=config.run.workers)


def _evaluate(
    config: ExperimentConfig,
    predict: Predictor,
    scenes: Sequence[Scene],
    class_ids: Sequence[int],
    names: dict[int, str],
    metadata: dict[str, Any],
    *,
    workers: int | None = None,
) -> EvalReport:
    evaluation = config.evaluation
    return evaluate_model(
        predict,
        scenes,
        class_ids,
        workers=config.run.workers if workers is None else workers,
        class_names=names,
        iou_threshold=evaluation.iou_threshold,
        interpolation=evaluation.interpolation,
        score_floor=evaluation.score_floor,
        metadata=metadata,
    )


def _write_json(path: Path, payload: dict[str, Any]) -> Path:
    return FileIoAdapter.write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n", context_type="report")


def _write_report(path: Path, report: EvalReport) -> Path:
    return FileIoAdapter.write_text(path, report.to_json() + "\n", context_type="report")


def _double_copy(detector: Detector) -> Detector:
    # Must be called under precision("double").
    return Detector.from_checkpoint(detector.to_checkpoint())


def _run_metadata(config: ExperimentConfig, **extra: Any) -> dict[str, Any]:
    return {"seed": config.run.seed, "image_size": config.benchmark.image_size, **extra}


# Commands


def run_pretrain(config: ExperimentConfig) -> TrainRunResult:
    """Train the source detector and evaluate it on held-out source scenes."""
    out = prepare_output_dir(config)
    benchmark = default_benchmark()
    bench = config.benchmark
    with precision(config.run.precision):
        detector = Detector.create(
            _class_ids(benchmark.source), bench.prior_spec(), image_size=bench.image_size, seed=config.run.seed
        )
        scenes = build_source_scenes(
            benchmark.source,
            bench.source_scenes,
            derive_seed(config.run.seed, _SOURCE_TRAIN_STREAM),
            bench.image_size,
            workers=config.run.workers,
        )
        training = pretrain_source(detector, scenes, config.train_settings("pretrain"), out_dir=out)

    with precision("double"):
        evaluated = _double_copy(detector)
        report = _evaluate(
            config,
            lambda image: evaluated.predict(image, stage="source"),
            source_test_scenes(config, benchmark),
            _class_ids(benchmark.source),
            _class_names(benchmark),
            _run_metadata(config, stage="source"),
        )
    _write_report(out / SOURCE_EVAL_FILE, report)
    return TrainRunResult(
        command="pretrain",
        out_dir=out,
        checkpoint=training.checkpoint_path,
        steps=training.steps,
        skipped=training.skipped,
        final_loss=training.losses[-1] if training.losses else None,
        loss_decreased=training.loss_decreased(),
        report=report,
    )


def _fine_tune_episode(
    config: ExperimentConfig,
    checkpoint: Checkpoint,
    variant: Variant,
    episode: Episode,
    out: Path,
    *,
    eval_workers: int | None = None,
) -> TrainRunResult:
    benchmark = default_benchmark()
    trial = episode.spec.trial
    bound = get_contextual_logger("main").bind(variant=variant.name, shots=episode.spec.shots, trial=trial)
    with precision(config.run.precision):
        detector = Detector.from_checkpoint(checkpoint)
        if detector.variant is not None:
            raise SplurgeContextTransformerParameterError(
                "Fine-tuning starts from a source checkpoint, got one with a target pathway",
                details={"variant": detector.variant.name},
            )
        detector.attach_target(
            variant,
            _class_ids(episode.spec.classes),
            pooling=config.pooling(),
            flags=variant.flags,
            seed=derive_seed(config.run.seed, _TARGET_INIT_STREAM, trial),
        )
        bound.info(f"Fine-tuning {detector.extra_parameter_count()} target-pathway weights")
        settings = config.train_settings("finetune", seed=derive_seed(config.run.seed, trial))
        training = fine_tune(detector, episode.train, settings, out_dir=out)

    metadata = _run_metadata(
        config,
        stage="target",
        shots=episode.spec.shots,
        trial=trial,
        variant=variant.name,
        flags=variant.flags.to_dict(),
    )
    with precision("double"):
        evaluated = _double_copy(detector)
        report = _evaluate(
            config,
            lambda image: evaluated.predict(image, stage="target"),
            episode.test,
            _class_ids(episode.spec.classes),
            _class_names(benchmark),
            metadata,
            workers=eval_workers,
        )
        mass = float("nan")
        if variant.transfer.context:
            mass = context_affinity_statistic(
                evaluated, episode.test, context_dependent_classes(episode.spec.classes)
            )
    _write_report(out / EVAL_FILE, report)
    bound.info(f"Target mAP {report.mean_ap:.4f}")
    return TrainRunResult(
        command="finetune",
        out_dir=out,
        checkpoint=training.checkpoint_path,
        steps=training.steps,
        skipped=training.skipped,
        final_loss=training.losses[-1] if training.losses else None,
        loss_decreased=training.loss_decreased(),
        report=report,
        affinity_mass=mass,
        variant=variant.name,
    )


def run_finetune(config: ExperimentConfig, source_checkpoint: str | Path) -> TrainRunResult:
    """Fine-tune the configured variant on one N-shot episode and evaluate it on the family's test scenes."""
    variant = config.resolve_variant()
    checkpoint = _read_checkpoint(source_checkpoint)
    out = prepare_output_dir(config)
    episode = target_episode(config, default_benchmark())
    return _fine_tune_episode(config, checkpoint, variant, episode, out)


def run_eval(config: ExperimentConfig, checkpoint_path: str | Path) -> EvalRunResult:
    """Evaluate any checkpoint on the test scenes of the classes it detects.

    Source checkpoints are scored on source scenes, fine-tuned ones on the
    target family's test scenes and incremental ones on both.
    """
    checkpoint = _read_checkpoint(checkpoint_path)
    out = prepare_output_dir(config)
    benchmark = default_benchmark()
    names = _class_names(benchmark)
    bench = config.benchmark
    result = EvalRunResult(out_dir=out, checkpoint=Path(checkpoint_path))

    with precision("double"):
        meta = checkpoint.metadata
        if meta.get("incremental"):
            model = IncrementalModel.from_checkpoint(checkpoint)
            targets = _select(benchmark.target, model.target_class_ids)
            target_scenes = sample_test_scenes(
                targets, bench.test_scenes, bench.test_seed, bench.image_size, workers=config.run.workers
            )
            result.reports["source"] = _evaluate(
                config,
                model.predict,
                source_test_scenes(config, benchmark),
                model.detector.source_class_ids,
                names,
                _run_metadata(config, stage="incremental", split="source"),
            )
            result.reports["target"] = _evaluate(
                config,
                model.predict,
                target_scenes,
                model.target_class_ids,
                names,
                _run_metadata(config, stage="incremental", split="target"),
            )
        elif meta.get("variant"):
            detector = Detector.from_checkpoint(checkpoint)
            targets = _select(benchmark.target, detector.target_class_ids)
            scenes = sample_test_scenes(
                targets, bench.test_scenes, bench.test_seed, bench.image_size, workers=config.run.workers
            )
            result.reports["target"] = _evaluate(
                config,
                lambda image: detector.predict(image, stage="target"),
                scenes,
                detector.target_class_ids,
                names,
                _run_metadata(config, stage="target", variant=meta["variant"], flags=meta.get("flags", {})),
            )
        elif meta.get("source_classes"):
            detector = Detector.from_checkpoint(checkpoint)
            result.reports["source"] = _evaluate(
                config,
                lambda image: detector.predict(image, stage="source"),
                source_test_scenes(config, benchmark),
                detector.source_class_ids,
                names,
                _run_metadata(config, stage="source"),
            )
        else:
            raise SplurgeContextTransformerCheckpointError("Checkpoint metadata names no classes to evaluate")

    for split, report in result.reports.items():
        result.report_paths[split] = _write_report(out / f"eval_{split}.json", report)
    return result


def run_incremental(config: ExperimentConfig, source_checkpoint: str | Path) -> IncrementalRunResult:
    """Add the target classes to a source detector and report S/T mAP before and after."""
    flags = config.flags()
    checkpoint = _read_checkpoint(source_checkpoint)
    out = prepare_output_dir(config)
    benchmark = default_benchmark()
    names = _class_names(benchmark)
    episode = target_episode(config, benchmark)
    source_scenes = source_test_scenes(config, benchmark)
    source_ids = _class_ids(benchmark.source)
    target_ids = _class_ids(benchmark.target)
    seed = derive_seed(config.run.seed, episode.spec.trial)

    def scores(model: IncrementalModel, split: str) -> EvalReport:
        scenes, ids = (source_scenes, source_ids) if split == "source" else (episode.test, target_ids)
        metadata = _run_metadata(config, stage="incremental", split=split)
        return _evaluate(config, model.predict, scenes, ids, names, metadata)

    with precision("double"):
        detector = Detector.from_checkpoint(checkpoint)
        if detector.variant is not None:
            raise SplurgeContextTransformerParameterError("Incremental fine-tuning starts from a source checkpoint")
        source_before = _evaluate(
            config,
            lambda image: detector.predict(image, stage="source"),
            source_scenes,
            source_ids,
            names,
            _run_metadata(config, stage="source"),
        ).mean_ap

    with precision(config.run.precision):
        model = IncrementalModel.create(
            Detector.from_checkpoint(checkpoint),
            target_ids,
            flags=flags,
            pooling=config.pooling(),
            seed=derive_seed(seed, _INCREMENTAL_STREAM),
        )
    with precision("double"):
        target_zero_shot = scores(IncrementalModel.from_checkpoint(model.to_checkpoint()), "target").mean_ap

    with precision(config.run.precision):
        scenes = build_incremental_trainset(
            benchmark.source,
            episode.train,
            episode.spec.shots,
            seed,
            image_size=config.benchmark.image_size,
            workers=config.run.workers,
        )
        training = fine_tune_incremental(model, scenes, config.train_settings("finetune", seed=seed), out_dir=out)

    with precision("double"):
        trained = IncrementalModel.from_checkpoint(model.to_checkpoint())
        source_report = scores(trained, "source")
        target_report = scores(trained, "target")
    _write_report(out / "incremental_source.json", source_report)
    _write_report(out / "incremental_target.json", target_report)
    result = IncrementalRunResult(
        out_dir=out,
        checkpoint=training.checkpoint_path,
        source_before=source_before,
        target_zero_shot=target_zero_shot,
        source_after=source_report.mean_ap,
        target_after=target_report.mean_ap,
        source_report=source_report,
        target_report=target_report,
    )
    _write_json(
        out / INCREMENTAL_FILE,
        {
            "before": {"source": finite_or_none(source_before), "target": finite_or_none(target_zero_shot)},
            "after": {"source": finite_or_none(result.source_after), "target": finite_or_none(result.target_after)},
            "shots": episode.spec.shots,
            "trial": episode.spec.trial,
        },
    )
    logger.info(
        f"Incremental S {source_before:.4f} -> {result.source_after:.4f}, "
        f"T {target_zero_shot:.4f} -> {result.target_after:.4f}"
    )
    return result


def run_gradcheck(config: ExperimentConfig, *, draws: int = DEFAULT_DRAWS) -> GradcheckRunResult:
    """Finite-difference check of every differentiable module."""
    out = prepare_output_dir(config)
    report = run_gradient_suite(seed=config.run.seed, draws=draws)
    path = _write_json(out / GRADCHECK_FILE, report.to_dict())
    return GradcheckRunResult(
        out_dir=out,
        report_path=path,
        passed=report.passed,
        failures=report.failures,
        modules=report.module_verdicts(),
        worst=report.worst,
    )


def check_transfer_ordering(result: AblationRunResult, shots: int | None = None) -> list[str]:
    """Directional checks on trial-mean mAP of the transfer rows that were run.

    The baseline must trail both partial variants, both must trail the full
    variant, and the full and unload variants must clear the baseline by 5
    and 3 points.
    """
    means = {v: result.mean_by(v, shots) for v in result.variants()}
    base = means.get("baseline")
    if base is None:
        return []
    failed: list[str] = []
    full = means.get("full")
    for partial in ("source-obj-only", "transformer-only"):
        if partial not in means:
            continue
        if not base < means[partial]:
            failed.append(f"baseline {base:.4f} is not below {partial} {means[partial]:.4f}")
        if full is not None and not means[partial] < full:
            failed.append(f"{partial} {means[partial]:.4f} is not below full {full:.4f}")
    if full is not None and not full >= base + 0.05:
        failed.append(f"full {full:.4f} is less than baseline {base:.4f} + 0.05")
    unload = means.get("unload")
    if unload is not None and not unload >= base + 0.03:
        failed.append(f"unload {unload:.4f} is less than baseline {base:.4f} + 0.03")
    return failed


def check_shot_trend(result: AblationRunResult, variant: str = "full") -> list[str]:
    """Shot-sweep checks on ``variant``.

    Its mean mAP never drops over 1, 2 and 5 shots, and its margin over the
    baseline at 1 shot exceeds the margin at 10 shots in most trials.
    """
    shots = [n for n in (1, 2, 5) if n in result.shots()]
    values = [result.mean_by(variant, n) for n in shots]
    failed = [
        f"{variant}: {a}-shot {va:.4f} above {b}-shot {vb:.4f}"
        for (a, va), (b, vb) in itertools.pairwise(zip(shots, values, strict=True))
        if va > vb
    ]
    if {1, 10} <= set(result.shots()) and "baseline" in result.variants():
        score = {(e.variant, e.shots, e.trial): e.mean_ap for e in result.entries}
        trials = result.trials()
        declining = sum(
            score[(variant, 1, k)] - score[("baseline", 1, k)] > score[(variant, 10, k)] - score[("baseline", 10, k)]
            for k in trials
        )
        if declining * 2 <= len(trials):
            failed.append(f"{variant} margin declined from 1 to 10 shots in only {declining} of {len(trials)} trials")
    return failed


def run_ablate(
    config: ExperimentConfig,
    source_checkpoint: str | Path,
    *,
    variants: Sequence[str] | None = None,
    shots: Sequence[int] | None = None,
    trials: Sequence[int] | None = None,
    check: bool = False,
) -> AblationRunResult:
    """Fine-tune every (variant, shots, trial) combination from one source checkpoint.

    Runs fan out over ``config.run.workers`` threads; each builds its own
    detector from the checkpoint and derives its seeds from the trial.
    With ``check`` the directional checks matching the sweep are applied.
    """
    checkpoint = _read_checkpoint(source_checkpoint)
    out = prepare_output_dir(config)
    benchmark = default_benchmark()
    resolved = [config.resolve_variant(name) for name in (variants or TABLE_ROWS)]
    shot_list = list(shots or (config.episode.shots,))
    trial_list = list(trials or range(1, config.episode.trials + 1))
    episodes = {
        key: target_episode(config, benchmark, shots=key[0], trial=key[1])
        for key in itertools.product(shot_list, trial_list)
    }
    jobs = list(itertools.product(resolved, shot_list, trial_list))
    workers = max(1, config.run.workers)
    eval_workers = 1 if workers > 1 else config.run.workers

    def run_one(variant: Variant, n: int, k: int) -> AblationEntry:
        run_dir = out / variant.name / f"shots-{n}" / f"trial-{k}"
        run = _fine_tune_episode(config, checkpoint, variant, episodes[(n, k)], run_dir, eval_workers=eval_workers)
        return AblationEntry(variant.name, n, k, run.mean_ap, derive_seed(config.run.seed, k))

    with performance_context("run_ablate", runs=len(jobs), workers=workers):
        if workers == 1:
            entries = [run_one(*job) for job in jobs]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(contextvars.copy_context().run, run_one, *job) for job in jobs]
                entries = [f.result() for f in futures]

    result = AblationRunResult(out_dir=out, entries=entries, checks_requested=check)
    if check:
        result.failed_checks = check_shot_trend(result) if len(shot_list) > 1 else check_transfer_ordering(result)
        for message in result.failed_checks:
            logger.warning(f"Directional check failed: {message}")
    payload = result_to_dict(result)
    payload["means"] = {v: {str(n): finite_or_none(result.mean_by(v, n)) for n in shot_list} for v in result.variants()}
    _write_json(out / ABLATION_FILE, payload)
    return result


def run_gen_data(config: ExperimentConfig) -> GenDataResult:
    """Render and dump the configured source set, source test set and target episode as PPM images plus JSON lines."""
    out = prepare_output_dir(config)
    benchmark = default_benchmark()
    bench = config.benchmark
    episode = target_episode(config, benchmark)
    sets = {
        "source_train": build_source_scenes(
            benchmark.source,
            bench.source_scenes,
            derive_seed(config.run.seed, _SOURCE_TRAIN_STREAM),
            bench.image_size,
            workers=config.run.workers,
        ),
        "source_test": source_test_scenes(config, benchmark),
        "target_train": episode.train,
        "target_test": episode.test,
    }
    with performance_context("run_gen_data", scenes=sum(len(s) for s in sets.values())):
        files = {name: dump_scenes(scenes, out / "data" / name) for name, scenes in sets.items()}
    result = GenDataResult(out_dir=out, annotation_files=files, scene_counts={k: len(v) for k, v in sets.items()})
    try:
        oracle = centroid_oracle_accuracy(episode.test, benchmark.target)
    except SplurgeContextTransformerParameterError as exc:
        logger.warning(f"Centroid oracle skipped: {exc}")
    else:
        result.oracle_accuracy = oracle.accuracy
        result.oracle_within_group = dict(oracle.within_group)
        logger.info(f"Context-free centroid oracle accuracy on target test scenes: {oracle.accuracy:.3f}")
    return result
