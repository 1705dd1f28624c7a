#!/usr/bin/env python3
"""
Command-line interface for splurge-context-transformer.

Subcommands pretrain a source detector, fine-tune any transfer variant on a
few-shot target episode, evaluate checkpoints, run incremental fine-tuning,
check gradients, sweep variants over shots and trials, and dump the
synthetic benchmark.

Copyright (c) 2025, Jim Schilling

This module is licensed under the MIT License.
"""

import argparse
import sys
from collections.abc import Sequence
from typing import Any

from .cli_output import pretty_print_result, simple_table_format
from .config import VALID_PRECISIONS, ExperimentConfig, load_config
from .context_transformer import EMBEDDINGS, METRICS, MODES, POOL_KINDS, THETA_SHARING
from .detector import TABLE_ROWS, VARIANTS
from .diagnostics import DEFAULT_DRAWS
from .exceptions import (
    SplurgeContextTransformerConfigurationError,
    SplurgeContextTransformerError,
    SplurgeContextTransformerFileError,
    SplurgeContextTransformerNumericalError,
    SplurgeContextTransformerValueError,
)
from .logging import configure_module_logging, get_contextual_logger, run_context
from .logging.core import setup_logging
from .main import run_ablate, run_eval, run_finetune, run_gen_data, run_gradcheck, run_incremental, run_pretrain
from .result_models import AblationRunResult, GradcheckRunResult, RunStatus

# Module domains
DOMAINS = ["cli", "interface"]

# Re-export public API
__all__ = [
    "simple_table_format",
    "pretty_print_result",
    "build_parser",
    "build_overrides",
    "main",
]

# Output formatting constants
ERROR_PREFIX = "ERROR:"

# Public return code constants
EXIT_CODE_SUCCESS = 0
EXIT_CODE_FAILURE = 1
EXIT_CODE_NUMERICAL = 2
EXIT_CODE_CHECK_FAILED = 3


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", dest="config_file", help="Path to a TOML (or .json) configuration file")
    common.add_argument("--seed", type=lambda s: int(s, 0), help="Run seed (unsigned 64-bit)")
    common.add_argument("--out", dest="out_dir", help="Output directory for every artifact of the run")
    common.add_argument("--precision", choices=VALID_PRECISIONS, help="Training precision (evaluation is double)")
    common.add_argument("--workers", type=int, help="Worker threads for rendering, evaluation and sweeps")
    common.add_argument("--log-level", dest="log_level", help="Logging level (DEBUG, INFO, WARNING, ...)")
    common.add_argument("--json", dest="output_json", action="store_true", help="Print the result as JSON")
    common.add_argument("-v", "--verbose", action="store_true", help="Print per-class tables")
    return common


def _episode_options() -> argparse.ArgumentParser:
    episode = argparse.ArgumentParser(add_help=False)
    episode.add_argument("--shots", type=int, help="Annotated images per target class")
    episode.add_argument("--trial", type=int, help="Trial index selecting the episode draw")
    return episode


def _variant_options() -> argparse.ArgumentParser:
    variant = argparse.ArgumentParser(add_help=False)
    variant.add_argument("--variant", choices=sorted(VARIANTS), help="Named transfer variant")
    variant.add_argument("--pool", choices=POOL_KINDS, help="Contextual-field pooling")
    variant.add_argument("--embedding", choices=EMBEDDINGS, help="Context embedding")
    variant.add_argument("--metric", choices=METRICS, help="Affinity metric")
    variant.add_argument("--theta", choices=THETA_SHARING, help="Source-to-target projection sharing")
    variant.add_argument("--mode", choices=MODES, help="Context-Transformer mode")
    return variant


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per experiment."""
    common = _common_options()
    episode = _episode_options()
    variant = _variant_options()

    parser = argparse.ArgumentParser(
        prog="splurge-context-transformer",
        description="Few-shot detection transfer with a Context-Transformer on a synthetic benchmark",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s pretrain --out runs/source
  %(prog)s finetune --source runs/source/source.ckpt --variant full --shots 5 --trial 1 --out runs/full
  %(prog)s eval --checkpoint runs/full/target.ckpt --out runs/full-eval
  %(prog)s ablate --source runs/source/source.ckpt --trials 5 --check --out runs/table
        """,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sub.add_parser("pretrain", parents=[common, variant], help="Pretrain the source detector")
    finetune = sub.add_parser("finetune", parents=[common, episode, variant], help="Fine-tune a variant")
    evaluate = sub.add_parser("eval", parents=[common, episode, variant], help="Evaluate a checkpoint")
    incremental = sub.add_parser(
        "incremental", parents=[common, episode, variant], help="Add target classes while keeping source ones"
    )
    gradcheck = sub.add_parser("gradcheck", parents=[common], help="Finite-difference check of every module")
    ablate = sub.add_parser("ablate", parents=[common, episode, variant], help="Sweep variants, shots and trials")
    sub.add_parser("gen-data", parents=[common, episode], help="Dump the synthetic benchmark")

    for command in (finetune, incremental, ablate):
        command.add_argument("--source", required=True, help="Pretrained source checkpoint")
    evaluate.add_argument("--checkpoint", required=True, help="Checkpoint to evaluate")
    gradcheck.add_argument("--draws", type=int, default=DEFAULT_DRAWS, help=f"Random draws per case ({DEFAULT_DRAWS})")
    ablate.add_argument(
        "--variants", nargs="+", choices=sorted(VARIANTS), help=f"Variants to sweep (default: {' '.join(TABLE_ROWS)})"
    )
    ablate.add_argument(
        "--shot-sweep",
        dest="shot_sweep",
        nargs="*",
        type=int,
        help="Sweep shot counts; without values uses episode.shot_sweep from the configuration",
    )
    ablate.add_argument("--trials", type=int, help="Run trials 1..N (default: episode.trials)")
    ablate.add_argument("--check", action="store_true", help="Apply the directional checks; exit 3 when one fails")
    return parser


def build_overrides(args: argparse.Namespace) -> dict[str, Any]:
    """Configuration overrides for the flags that were given on the command line."""
    overrides: dict[str, Any] = {}
    for key in ("seed", "out_dir", "precision", "workers", "log_level"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value.upper() if key == "log_level" else value

    episode = {key: getattr(args, key, None) for key in ("shots", "trial")}
    if getattr(args, "trials", None) is not None:
        episode["trials"] = args.trials
    episode = {k: v for k, v in episode.items() if v is not None}
    if episode:
        overrides["episode"] = episode

    variant: dict[str, Any] = {}
    if getattr(args, "variant", None) is not None:
        variant["name"] = args.variant
    for key in ("pool", "embedding", "metric", "theta", "mode"):
        if getattr(args, key, None) is not None:
            variant[key] = getattr(args, key)
    if variant:
        overrides["variant"] = variant
    return overrides


def _dispatch(args: argparse.Namespace, config: ExperimentConfig) -> Any:
    command = args.command
    if command == "pretrain":
        return run_pretrain(config)
    if command == "finetune":
        return run_finetune(config, args.source)
    if command == "eval":
        return run_eval(config, args.checkpoint)
    if command == "incremental":
        return run_incremental(config, args.source)
    if command == "gradcheck":
        return run_gradcheck(config, draws=args.draws)
    if command == "ablate":
        shots: Sequence[int] | None = None
        if args.shot_sweep is not None:
            shots = args.shot_sweep or config.episode.shot_sweep
        return run_ablate(config, args.source, variants=args.variants, shots=shots, check=args.check)
    return run_gen_data(config)


def _exit_code(result: Any) -> int:
    if isinstance(result, GradcheckRunResult | AblationRunResult) and result.status is RunStatus.CHECK_FAILED:
        return EXIT_CODE_CHECK_FAILED
    return EXIT_CODE_SUCCESS


def main(argv: Sequence[str] | None = None) -> int:
    """Main CLI entry point.

    Parses arguments, layers the configuration, sets up logging under the
    output directory, runs the subcommand and prints its result.

    Returns:
        Exit code: 0 for success, 1 for configuration, input or file errors,
        2 for numerical failure, 3 when a requested check fails
    """
    # Some Python runtimes expose reconfigure on TextIO; narrow before calling
    try:
        from io import TextIOWrapper

        if isinstance(sys.stdout, TextIOWrapper):
            sys.stdout.reconfigure(encoding="utf-8")
        if isinstance(sys.stderr, TextIOWrapper):
            sys.stderr.reconfigure(encoding="utf-8")
    except Exception:
        pass

    logger = configure_module_logging("cli", log_level="INFO")
    args = build_parser().parse_args(argv)
    logger.debug(f"CLI arguments: {vars(args)}")

    exit_code = EXIT_CODE_FAILURE
    try:
        raw = load_config(args.config_file, overrides=build_overrides(args), command=args.command)
        config = ExperimentConfig.from_dict(raw, command=args.command)

        setup_logging(log_level=config.run.log_level, log_dir=str(config.out_dir / "logs"))
        logger = configure_module_logging("cli", log_level=config.run.log_level)

        with run_context() as run_id:
            get_contextual_logger("cli").bind(
                run=run_id, command=args.command, variant=config.variant.name, seed=config.run.seed
            ).info("Starting run")
            result = _dispatch(args, config)
            pretty_print_result(result, output_json=args.output_json, verbose=args.verbose)
            exit_code = _exit_code(result)

    except SplurgeContextTransformerNumericalError as e:
        logger.error(f"Numerical failure: {e}")
        print(f"{ERROR_PREFIX} Numerical failure: {e}")
        exit_code = EXIT_CODE_NUMERICAL
    except SplurgeContextTransformerConfigurationError as e:
        logger.error(f"Configuration error: {e}")
        print(f"{ERROR_PREFIX} Configuration error: {e}")
        exit_code = EXIT_CODE_FAILURE
    except SplurgeContextTransformerFileError as e:
        logger.error(f"File error: {e}")
        print(f"{ERROR_PREFIX} File error: {e}")
        exit_code = EXIT_CODE_FAILURE
    except SplurgeContextTransformerValueError as e:
        logger.error(f"Invalid input: {e}")
        print(f"{ERROR_PREFIX} Invalid input: {e}")
        exit_code = EXIT_CODE_FAILURE
    except SplurgeContextTransformerError as e:
        logger.error(f"Run failed: {e}")
        print(f"{ERROR_PREFIX} Run failed: {e}")
        exit_code = EXIT_CODE_FAILURE
    except Exception as e:
        logger.error(f"Runtime error: {e}", exc_info=True)
        print(f"{ERROR_PREFIX} Runtime error: {e}")
        exit_code = EXIT_CODE_FAILURE
    finally:
        logger.info(f"splurge-context-transformer {args.command} completed with exit code {exit_code}")
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
