"""Unified CLI entry point for rmst-targeted.

Usage:
    rmst-targeted [--verbose] <command> [args]

Commands:
    pseudo              Export per-arm RMST pseudo-values as CSV
    estimate            Estimate the RMST difference (JSON report)
    sensitivity cr      Copy-reference sensitivity analysis (JSON)
    simulate            Generate a simulated study (CSV) and its truth (JSON)

Exit codes: 0 ok, 1 unexpected error, 2 invalid input, 3 tau beyond
support, 4 estimation failure.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Callable, Optional

import pandas as pd

from rmst_targeted.dataset import load_csv, read_frame, split_by_arm
from rmst_targeted.estimators import estimate
from rmst_targeted.logging import Logger
from rmst_targeted.pseudo import rmst_pseudo_per_arm
from rmst_targeted.sensitivity import run_cr_analysis, tentative_pseudo
from rmst_targeted.simulation import generate, get_scenario, truth
from rmst_targeted.survival import curve_to_frame, kaplan_meier, rmst_difference_plugin
from rmst_targeted.types import (
    METHODS,
    DataValidationException,
    EstimationException,
    PseudoValueException,
    TauSupportException,
)

from .run_config import DEFAULT_FOLDS, DEFAULT_SEED, RunConfig

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_INPUT = 2
EXIT_SUPPORT = 3
EXIT_ESTIMATION = 4


class CLI:
    """Main CLI coordinator."""

    def __init__(self, verbose: bool = False):
        """Initialize CLI.

        Args:
            verbose: Enable logging to standard error.
        """
        self.verbose = verbose
        self.logger = Logger(enabled=verbose)

    def _guard(self, action: Callable[[], None]) -> int:
        """Run ``action`` and map library errors to exit codes."""
        try:
            action()
            return EXIT_OK
        except TauSupportException as e:
            print(f"Tau support error: {e} (largest valid tau: {e.max_tau})", file=sys.stderr)
            return EXIT_SUPPORT
        except DataValidationException as e:
            print(f"Input error: {e}", file=sys.stderr)
            return EXIT_INPUT
        except (EstimationException, PseudoValueException) as e:
            print(f"Estimation error: {e}", file=sys.stderr)
            return EXIT_ESTIMATION

    @staticmethod
    def _write_text(text: str, out: Optional[Path]) -> None:
        if out is None:
            sys.stdout.write(text)
        else:
            Path(out).write_text(text, encoding='utf-8')

    @classmethod
    def _write_json(cls, payload, out: Optional[Path]) -> None:
        cls._write_text(json.dumps(payload, indent=2) + "\n", out)

    @classmethod
    def _write_frame(cls, frame: pd.DataFrame, out: Optional[Path]) -> None:
        cls._write_text(frame.to_csv(index=False), out)

    def cmd_pseudo(self, config: RunConfig) -> int:
        """Write the input records with a ``pseudo_value`` column.

        Returns:
            Exit code.
        """
        def action():
            config.validate(require_tau=True)
            data = load_csv(config.input)
            po = rmst_pseudo_per_arm(data, config.tau)
            frame = read_frame(config.input)
            frame['pseudo_value'] = po.pseudo
            self._write_frame(frame, config.out)
            if config.curves is not None:
                curves = pd.concat(
                    [curve_to_frame(kaplan_meier(view.time, view.event), arm=view.arm)
                     for view in split_by_arm(data)],
                    ignore_index=True,
                )
                curves.to_csv(config.curves, index=False)
            self.logger.info(f"Wrote {po.n} pseudo-values at tau={config.tau}")

        return self._guard(action)

    def cmd_estimate(self, config: RunConfig) -> int:
        """Print an EstimateReport as JSON.

        Returns:
            Exit code.
        """
        def action():
            config.validate(require_tau=True)
            data = load_csv(config.input)
            po = rmst_pseudo_per_arm(data, config.tau)
            plugin = rmst_difference_plugin(data, config.tau)
            report = estimate(po, config.method, config.nuisance_config(), config.seed, plugin)
            self._write_json(report, config.out)

        return self._guard(action)

    def cmd_sensitivity_cr(self, config: RunConfig) -> int:
        """Print main and copy-reference reports as JSON.

        Returns:
            Exit code.
        """
        def action():
            config.validate(require_tau=True)
            data = load_csv(config.input)
            plugin = rmst_difference_plugin(data, config.tau)
            result = run_cr_analysis(
                data, config.tau, config.method, config.nuisance_config(),
                config.seed, threads=config.threads, plugin_difference=plugin,
            )
            main_report, cr_report = result['main_report'], result['cr_report']
            self._write_json({
                'main': main_report,
                'cr': cr_report,
                'replaced_count': result['replaced_count'],
                'delta': cr_report['estimate'] - main_report['estimate'],
            }, config.out)
            if config.tentative_out is not None:
                tentative_pseudo(data, config.tau).to_frame().to_csv(config.tentative_out, index=False)

        return self._guard(action)

    def cmd_simulate(self, config: RunConfig) -> int:
        """Write a simulated study as CSV, and optionally its truth as JSON.

        With ``--truth`` and no ``--out`` only the truth is printed.

        Returns:
            Exit code.
        """
        def action():
            scenario = get_scenario(config.scenario)
            if not config.truth or config.out is not None:
                if config.n is None:
                    raise DataValidationException("--n is required")
                data = generate(scenario, config.n, seed=config.seed)
                self._write_frame(data.to_frame(), config.out)
            if config.truth:
                self._write_json(truth(scenario), None)

        return self._guard(action)


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", required=True, help="Survival CSV (id, arm, time, event, covariates)")
    parser.add_argument("--tau", type=float, required=True, help="Restriction time")
    parser.add_argument("--out", default=None, help="Output path (default: standard output)")
    parser.add_argument("--threads", type=int, default=1, help="Worker cap (default: 1)")


def _add_estimator_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--method", choices=METHODS, default="tmle", help="Estimator (default: tmle)")
    parser.add_argument("--learners", default=None,
                        help="Comma-separated learner names (default: method default library)")
    parser.add_argument("--folds", type=int, default=DEFAULT_FOLDS,
                        help=f"Cross-validation folds (default: {DEFAULT_FOLDS})")
    parser.add_argument("--g-bounds", default="0.025,0.975",
                        help="Propensity truncation bounds lo,hi (default: 0.025,0.975)")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED,
                        help=f"Seed for cross-validation folds (default: {DEFAULT_SEED})")


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with all subcommands."""
    parser = argparse.ArgumentParser(
        description="rmst-targeted - RMST differences from pseudo-observations",
        prog="rmst-targeted"
    )
    parser.add_argument(
        "--verbose", "-v",
        action="store_true",
        help="Enable logging to standard error"
    )

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    pseudo_parser = subparsers.add_parser("pseudo", help="Export pseudo-values as CSV")
    _add_data_flags(pseudo_parser)
    pseudo_parser.add_argument("--curves", default=None, help="Also write per-arm Kaplan-Meier curves here")

    estimate_parser = subparsers.add_parser("estimate", help="Estimate the RMST difference")
    _add_data_flags(estimate_parser)
    _add_estimator_flags(estimate_parser)

    sensitivity_parser = subparsers.add_parser("sensitivity", help="Sensitivity analyses")
    sensitivity_sub = sensitivity_parser.add_subparsers(dest="sensitivity_command", required=True)
    cr_parser = sensitivity_sub.add_parser("cr", help="Copy-reference analysis")
    _add_data_flags(cr_parser)
    _add_estimator_flags(cr_parser)
    cr_parser.add_argument("--tentative-out", default=None,
                           help="Also write the tentative dataset's pseudo-values here")

    simulate_parser = subparsers.add_parser("simulate", help="Generate a simulated study")
    simulate_parser.add_argument("--scenario", required=True, help="Scenario name (S0, S1, S1-misQ, S1-misG)")
    simulate_parser.add_argument("--n", type=int, default=None, help="Number of subjects")
    simulate_parser.add_argument("--seed", type=int, default=DEFAULT_SEED,
                                 help=f"Generation seed (default: {DEFAULT_SEED})")
    simulate_parser.add_argument("--out", default=None, help="CSV output path (default: standard output)")
    simulate_parser.add_argument("--truth", action="store_true", help="Print the true RMST difference as JSON")

    return parser


def main(argv=None):
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    # Show help if no command
    if not args.command:
        parser.print_help()
        return EXIT_UNEXPECTED

    try:
        config = RunConfig.from_args(args)
    except DataValidationException as e:
        print(f"Input error: {e}", file=sys.stderr)
        return EXIT_INPUT

    try:
        cli = CLI(verbose=args.verbose)

        if args.command == "pseudo":
            return cli.cmd_pseudo(config)
        elif args.command == "estimate":
            return cli.cmd_estimate(config)
        elif args.command == "sensitivity":
            if args.sensitivity_command == "cr":
                return cli.cmd_sensitivity_cr(config)
        elif args.command == "simulate":
            return cli.cmd_simulate(config)

    except Exception as e:
        print(f"Unexpected error: {e}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
