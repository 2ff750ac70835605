"""Command-line interface: fit, diagnose, specsearch, simulate and weights export."""

import argparse
import logging
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

from .analysis import MigrationAnalysis, load_weights
from .config import AGRI_MODE, AGRI_MODES, DISTANCE_POWER, OUTPUT_DIR, SIGNIFICANCE_LEVEL, configure_logging
from .dataset import design_columns, write_panel_csv
from .exceptions import InputError, InvalidWeights, MigrationError, NumericalError
from .report import ReportDocument, recovery_table
from .simulate import ESTIMATORS, load_scenario, monte_carlo_recovery, simulate_panel, simulation_weights
from .spatial import SpatialModel
from .weights import write_weights_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--alpha", type=float, default=SIGNIFICANCE_LEVEL, help="significance level (default %(default)s)")
    common.add_argument("--seed", type=int, default=None, help="master seed for simulations")
    common.add_argument("--output-dir", type=Path, default=OUTPUT_DIR, help="directory for reports and CSV files")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return common


def _data_options() -> argparse.ArgumentParser:
    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--panel", type=Path, required=True, help="panel CSV")
    source = data.add_mutually_exclusive_group()
    source.add_argument("--regions", type=Path, help="regions CSV for inverse-distance weights")
    source.add_argument("--weights", type=Path, help="explicit weights CSV")
    data.add_argument("--power", type=float, default=DISTANCE_POWER, help="inverse-distance power")
    data.add_argument("--no-standardize", action="store_true", help="keep W unstandardized")
    data.add_argument("--no-wages", action="store_true", help="drop the wage differential")
    data.add_argument("--no-housing", action="store_true", help="drop the housing differential")
    data.add_argument("--agri-mode", choices=AGRI_MODES, default=AGRI_MODE)
    data.add_argument("--year", type=int, default=None, help="cross-section year (default: last usable year)")
    return data


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    data = _data_options()
    parser = argparse.ArgumentParser(
        prog="migration",
        description="Regional net migration: panel, spatial and Monte Carlo estimation.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    fit = commands.add_parser("fit", parents=[common, data], help="estimate one model and print its table")
    fit.add_argument("model", choices=["ols", "fe", "re", "sar", "sem"])
    fit.add_argument(
        "--restrict-hausman",
        nargs="+",
        default=None,
        metavar="NAME",
        help="slopes left out of the Hausman comparison",
    )

    commands.add_parser("diagnose", parents=[common, data], help="residual and spatial diagnostics")
    commands.add_parser("specsearch", parents=[common, data], help="forward spatial specification search")

    simulate = commands.add_parser("simulate", parents=[common], help="simulate a panel and run Monte Carlo recovery")
    simulate.add_argument("scenario", type=Path, help="scenario file of key = value lines")
    simulate.add_argument("--estimator", choices=ESTIMATORS, default=None)
    simulate.add_argument("--workers", type=int, default=1)
    simulate.add_argument("--no-progress", action="store_true")

    weights = commands.add_parser("weights", help="spatial weights utilities")
    weights_commands = weights.add_subparsers(dest="weights_command", required=True)
    export = weights_commands.add_parser("export", parents=[common], help="write W built from a regions CSV")
    export.add_argument("--regions", type=Path, required=True)
    export.add_argument("--power", type=float, default=DISTANCE_POWER)
    export.add_argument("--no-standardize", action="store_true")
    export.add_argument("--output", type=Path, default=None, help="weights CSV path (default: <output-dir>/weights.csv)")
    return parser


def _analysis(args: argparse.Namespace) -> MigrationAnalysis:
    return MigrationAnalysis.from_files(
        args.panel,
        regions_path=args.regions,
        weights_path=args.weights,
        power=args.power,
        standardize=not args.no_standardize,
        agri_mode=args.agri_mode,
        include_wage=not args.no_wages,
        include_housing=not args.no_housing,
        alpha=args.alpha,
    )


def _emit(document: ReportDocument, output_dir: Path, stem: str) -> None:
    document.write(output_dir, stem)
    sys.stdout.write(document.render())


def cmd_fit(args: argparse.Namespace) -> int:
    analysis = _analysis(args)
    if args.model == "ols":
        document = analysis.ols_report(args.year)
    elif args.model in ("fe", "re"):
        restrict = tuple(args.restrict_hausman) if args.restrict_hausman else None
        document = analysis.panel_report(restrict)
    else:
        document = analysis.spatial_report(SpatialModel(args.model.upper()), args.year)
    _emit(document, args.output_dir, f"fit_{args.model}")
    return EXIT_OK


def cmd_diagnose(args: argparse.Namespace) -> int:
    document = _analysis(args).diagnostics_report(args.year)
    _emit(document, args.output_dir, "diagnose")
    return EXIT_OK


def cmd_specsearch(args: argparse.Namespace) -> int:
    document = _analysis(args).specsearch_report(args.year)
    _emit(document, args.output_dir, "specsearch")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    config = load_scenario(args.scenario)
    if args.seed is not None:
        config = replace(config, master_seed=args.seed)
    estimator = args.estimator or config.estimator
    panel = None
    if len(config.true_coefficients) == len(design_columns(config.include_wage, config.include_housing)):
        panel = simulate_panel(config)
    w = simulation_weights(config)
    summary = monte_carlo_recovery(config, estimator, progress=not args.no_progress, workers=args.workers)
    document = recovery_table(summary)

    output_dir: Path = args.output_dir
    if panel is not None:
        write_panel_csv(panel, output_dir / "simulated_panel.csv")
    write_weights_csv(w, output_dir / "simulated_weights.csv")
    summary.to_csv(output_dir / f"recovery_{estimator}.csv")
    _emit(document, output_dir, f"recovery_{estimator}")
    return EXIT_OK


def cmd_weights_export(args: argparse.Namespace) -> int:
    w = load_weights(regions_path=args.regions, power=args.power, standardize=not args.no_standardize)
    if w is None:
        raise InvalidWeights("a regions file is required")
    path = write_weights_csv(w, args.output or args.output_dir / "weights.csv")
    sys.stdout.write(f"{path}\n")
    return EXIT_OK


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "fit":
        return cmd_fit(args)
    if args.command == "diagnose":
        return cmd_diagnose(args)
    if args.command == "specsearch":
        return cmd_specsearch(args)
    if args.command == "simulate":
        return cmd_simulate(args)
    return cmd_weights_export(args)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configure_logging("DEBUG" if args.verbose else None)
        logger.debug("Command: %s", vars(args))
        return _dispatch(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except MigrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
