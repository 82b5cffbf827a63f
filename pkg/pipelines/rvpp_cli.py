#!/usr/bin/env python3
"""Command-line front end for the RVPP bidding engine."""

from __future__ import annotations

import argparse
import logging
from pathlib import Path
import sys
from typing import Callable, Dict, Sequence

PROJECT_ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from pipelines import rvpp_cases  # noqa: E402
from scripts.rvpp.domain import PortfolioValidationError, TimeGrid  # noqa: E402
from scripts.rvpp.market_io import (  # noqa: E402
    RESOLUTIONS,
    RUN_VARIANTS,
    SB_RULES,
    InputFormatError,
    RunConfig,
    load_run_config,
)
from scripts.rvpp.milp import MilpModelError  # noqa: E402
from scripts.rvpp.oracle import CertificationError, CombinatorialGuardError  # noqa: E402
from scripts.rvpp.robust import STRATEGIES, UncertaintyModelError  # noqa: E402
from scripts.rvpp.solution import SolutionExtractionError  # noqa: E402
from scripts.rvpp.solvers import SolverBackendError  # noqa: E402
from scripts.rvpp.synthetic import generate_synthetic  # noqa: E402
from scripts.utils.console import DEFAULT_MAX_WORKERS, non_negative_int, positive_int  # noqa: E402
from scripts.utils.runtime import setup_script_logging  # noqa: E402
from scripts.utils.settings import SettingsError, load_solver_settings  # noqa: E402

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_CERTIFICATION = 4

VALIDATION_ERRORS = (
    PortfolioValidationError,
    UncertaintyModelError,
    InputFormatError,
    MilpModelError,
    SettingsError,
    CombinatorialGuardError,
)
SOLVER_ERRORS = (SolverBackendError, SolutionExtractionError)

LOGGER = logging.getLogger("scripts.cli")


def _add_config_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, required=True, help="Path to portfolio.cfg.")
    parser.add_argument("--out", type=Path, default=None, help="Output directory (default: [run] output_dir).")
    parser.add_argument(
        "--no-timings",
        action="store_true",
        default=False,
        help="Leave solve_seconds blank so reruns are byte-identical.",
    )
    parser.add_argument("--write-lp", action="store_true", default=False, help="Write model.lp per run.")
    parser.add_argument(
        "--max-workers",
        type=positive_int,
        default=DEFAULT_MAX_WORKERS,
        help=f"Concurrent solves (default: {DEFAULT_MAX_WORKERS}).",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Robust day-ahead bidding for a renewable-only virtual power plant.")
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", help="Solve one run from a config.")
    _add_config_args(solve)
    solve.add_argument("--strategy", choices=("deterministic", *STRATEGIES), default=None)
    solve.add_argument("--variant", choices=RUN_VARIANTS, default=None)
    solve.add_argument("--resolution", choices=RESOLUTIONS, default=None)

    for name, text in (
        ("case1", "Deterministic vs robust strategies under MBRO."),
        ("case2", "Classic RO at 15-minute and hourly resolution."),
        ("case3", "MBRO against single-bound RO."),
    ):
        case = commands.add_parser(name, help=text)
        _add_config_args(case)
        if name == "case3":
            case.add_argument("--sb-rule", choices=SB_RULES, default=None)

    certify = commands.add_parser("certify", help="Check MBRO duality against brute-force enumeration.")
    certify.add_argument("--seed", type=non_negative_int, default=0)
    certify.add_argument("--instances", type=positive_int, default=200)
    certify.add_argument("--periods", type=positive_int, default=6)
    certify.add_argument("--bounds", type=positive_int, default=2)
    certify.add_argument("--units", type=positive_int, default=2)
    certify.add_argument("--big-m-scale", type=float, default=1.0)
    certify.add_argument("--out", type=Path, default=Path("output") / "certify")
    certify.add_argument("--replay", type=Path, default=None, help="Re-run one saved failing instance.")

    gen = commands.add_parser("gen", help="Write seeded synthetic inputs.")
    gen.add_argument("--seed", type=non_negative_int, required=True)
    gen.add_argument("--out", type=Path, required=True)
    gen.add_argument("--resolution", choices=RESOLUTIONS, default="quarter")
    gen.add_argument("--hour-constant", action="store_true", default=False)
    gen.add_argument("--preset", default="table3:balanced:mbro")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = load_run_config(
        args.config,
        strategy=getattr(args, "strategy", None),
        variant=getattr(args, "variant", None),
        resolution=getattr(args, "resolution", None),
        sb_rule=getattr(args, "sb_rule", None),
        output_dir=args.out.resolve() if args.out is not None else None,
    )
    if args.no_timings:
        cfg = cfg.with_overrides(record_timings=False)
    if args.write_lp:
        cfg = cfg.with_overrides(solver=cfg.solver.with_overrides(write_lp=True))
    return cfg


def output_dir_for(args: argparse.Namespace) -> Path:
    if args.command in ("certify", "gen"):
        return args.out
    if args.out is not None:
        return args.out
    return load_run_config(args.config).output_dir


def cmd_solve(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    written = rvpp_cases.run_solve(cfg)
    LOGGER.info("Wrote %s file(s) to %s", len(written), cfg.output_dir)
    return EXIT_OK


def cmd_case(args: argparse.Namespace) -> int:
    cfg = config_from_args(args)
    rvpp_cases.run_case(args.command, cfg, max_workers=args.max_workers)
    return EXIT_OK


def cmd_certify(args: argparse.Namespace) -> int:
    if args.replay is not None:
        report = rvpp_cases.replay_certify(args.replay, load_solver_settings())
        print(report.line())
        return EXIT_OK if report.passed else EXIT_CERTIFICATION
    summary = rvpp_cases.run_certify(
        args.seed,
        args.instances,
        out_dir=args.out,
        settings=load_solver_settings(),
        period_count=args.periods,
        k_count=args.bounds,
        unit_count=args.units,
        big_m_scale=args.big_m_scale,
    )
    for report in summary.reports:
        print(report.line())
    print(summary.line())
    return EXIT_OK


def cmd_gen(args: argparse.Namespace) -> int:
    grid = TimeGrid.hourly() if args.resolution == "hourly" else TimeGrid.quarter_hourly()
    path = generate_synthetic(
        args.seed, grid, args.out, hour_constant=args.hour_constant, budget_preset=args.preset
    )
    print(f"✅ Synthetic inputs written: {path}")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "solve": cmd_solve,
    "case1": cmd_case,
    "case2": cmd_case,
    "case3": cmd_case,
    "certify": cmd_certify,
    "gen": cmd_gen,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(list(argv) if argv is not None else None)
    try:
        out_dir = output_dir_for(args)
        out_dir.mkdir(parents=True, exist_ok=True)
        logger, log_path = setup_script_logging(
            base_dir=out_dir, logger_name="scripts", log_filename=f"{args.command}.log"
        )
        logger.info("Command %s, log file %s", args.command, log_path)
        return COMMANDS[args.command](args)
    except VALIDATION_ERRORS as exc:
        LOGGER.error("Validation failed: %s", exc)
        print(f"❌ {exc}")
        return EXIT_VALIDATION
    except SOLVER_ERRORS as exc:
        LOGGER.error("Solver failed: %s", exc)
        print(f"❌ {exc}")
        return EXIT_SOLVER
    except CertificationError as exc:
        LOGGER.error("Certification failed: %s", exc)
        print(f"❌ {exc}")
        if exc.replay_path is not None:
            print(f"   Replay with: certify --replay {exc.replay_path}")
        return EXIT_CERTIFICATION


if __name__ == "__main__":
    raise SystemExit(main())
