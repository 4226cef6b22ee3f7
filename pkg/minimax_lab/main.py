from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from minimax_lab.core.config_builder import ConfigError, load_config
from minimax_lab.core.oracle import OracleUnavailableError
from minimax_lab.core.tasks import DimensionMismatchError
from minimax_lab.models.experiment_config import ExperimentConfig
from minimax_lab.services.study_service import run_study

logger = logging.getLogger("minimax_lab")

EXIT_OK = 0
EXIT_PROPERTY_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3

STUDIES = ("train", "convergence", "compare-init", "sample-complexity", "compare-balancers", "gap")
OUTDIR_ENV = "MINIMAX_LAB_OUTDIR"


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="minimax-lab",
        description="Minimax pre-training studies on synthetic convex task families.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Override the config seed.")
    common.add_argument("--outdir", type=Path, default=None, help=f"Output directory (default: ${OUTDIR_ENV} or ./output).")
    common.add_argument("--jobs", type=int, default=1, help="Worker threads for independent runs.")
    common.add_argument("--quiet", action="store_true", help="Only warnings and errors.")

    sub = parser.add_subparsers(dest="study", required=True)
    for name in STUDIES:
        p = sub.add_parser(name, parents=[common])
        if name == "gap":
            p.add_argument("--T", type=int, default=4, help="Number of tasks in the gap family.")
            p.add_argument("--config", type=Path, default=None)
        else:
            p.add_argument("--config", type=Path, required=True)
    return parser


def _setup_logging(quiet: bool) -> None:
    logging.basicConfig(
        level=logging.WARNING if quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _output_dir(arg: Optional[Path], config: ExperimentConfig) -> Path:
    if arg is not None:
        return arg
    if config.outdir is not None:
        return config.outdir
    return Path(os.environ.get(OUTDIR_ENV, "output"))


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    _setup_logging(args.quiet)
    if args.jobs < 1:
        logger.error("--jobs must be >= 1")
        return EXIT_CONFIG

    overrides = {"seed": args.seed}
    try:
        if args.config is None:
            config = ExperimentConfig.model_validate({k: v for k, v in overrides.items() if v is not None})
        else:
            config = load_config(args.config, overrides=overrides)
        if args.study == "gap" and args.T < 2:
            raise ConfigError("T", "gap family needs T >= 2")
    except FileNotFoundError as e:
        logger.error("config file not found: %s", e.filename)
        return EXIT_CONFIG
    except (ConfigError, OSError) as e:
        logger.error("invalid config: %s", e)
        return EXIT_CONFIG

    outdir = _output_dir(args.outdir, config)
    try:
        output = run_study(
            args.study,
            config,
            output_dir=outdir,
            jobs=args.jobs,
            gap_T=args.T if args.study == "gap" else None,
        )
    except (ConfigError, DimensionMismatchError, OracleUnavailableError) as e:
        logger.error("cannot run %s: %s", args.study, e)
        return EXIT_CONFIG
    except OSError as e:
        logger.error("could not write outputs to %s: %s", outdir, e)
        return EXIT_IO

    if not args.quiet:
        sys.stdout.write(output.summary_path.read_text(encoding="utf-8"))
    return EXIT_OK if output.passed else EXIT_PROPERTY_FAILED


if __name__ == "__main__":
    raise SystemExit(main())
