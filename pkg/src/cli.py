"""
ABOUTME: Command-line interface for weed-ipp
ABOUTME: Runs, compares, sweeps and inspects planner experiments from TOML scenarios
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

from .config import ScenarioConfig, load_config
from .errors import ConfigurationError
from .harness import paired_deltas, run_experiment, run_sweep, summary_table
from .logging_config import setup_logging
from .main import PLANNERS, simulate_trial
from .reporting import (
    write_belief_csv,
    write_belief_pgm,
    write_comparison_outputs,
    write_effective_config,
    write_events,
    write_experiment_outputs,
    write_samples_csv,
    write_trial_csv,
    write_truth_pgm,
)
from .trajectory import PolynomialPath, sample
from .utils import ensure_directory, log_operation

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def create_parser() -> argparse.ArgumentParser:
    """
    Create and configure argument parser.

    Returns:
        Configured ArgumentParser instance
    """
    parser = argparse.ArgumentParser(
        prog="weed-ipp",
        description="Adaptive informative path planning over weed maps",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Validate a scenario
  weed-ipp validate --config scenarios/default.toml

  # 20 adaptive trials on 4 processes
  weed-ipp run --config scenarios/default.toml --jobs 4

  # Adaptive vs lawnmower on paired seeds
  weed-ipp compare --config scenarios/default.toml --trials 20

  # Objective ablation
  weed-ipp sweep --config scenarios/default.toml --kind objectives

  # Dump one executed trajectory and its decision stream
  weed-ipp inspect-path --config scenarios/default.toml --seed 7
        """,
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable debug logging")
    parser.add_argument("--quiet", "-q", action="store_true", help="Only log errors, no progress bars")
    parser.add_argument("--log-file", type=str, default=None, help="Also log at DEBUG to this file")
    parser.add_argument("--version", action="version", version="%(prog)s 0.1.0")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", "-c", type=str, default=None,
        help="Scenario TOML file (default: built-in reference scenario)",
    )
    common.add_argument("--out", "-o", type=str, default=None,
                        help="Output root (overrides experiment.out_dir and $IPP_OUTPUT_ROOT)")

    trials = argparse.ArgumentParser(add_help=False)
    trials.add_argument("--trials", type=int, default=None, help="Number of trials (experiment.n_trials)")
    trials.add_argument("--seed", type=int, default=None, help="Base seed (experiment.base_seed)")
    trials.add_argument("--jobs", type=int, default=None, help="Worker processes (experiment.jobs)")

    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common, trials], help="Run one planner over seeded trials")
    run.add_argument("--planner", choices=PLANNERS, default="adaptive", help="Planner (default: adaptive)")

    sub.add_parser("compare", parents=[common, trials],
                   help="Adaptive vs lawnmower on paired seeds with a summary table")

    sweep = sub.add_parser("sweep", parents=[common, trials], help="Ablation over objectives or optimizers")
    sweep.add_argument("--kind", choices=("objectives", "optimizers"), default="objectives",
                       help="Which ablation to run (default: objectives)")

    inspect = sub.add_parser("inspect-path", parents=[common],
                             help="Run one trial and dump its trajectory, events and maps")
    inspect.add_argument("--seed", type=int, required=True, help="Trial seed")
    inspect.add_argument("--planner", choices=PLANNERS, default="adaptive", help="Planner (default: adaptive)")
    inspect.add_argument("--dt", type=float, default=0.1, help="Trajectory sample period in s (default: 0.1)")

    sub.add_parser("validate", parents=[common], help="Load and validate a scenario only")
    return parser


def load_scenario(args: argparse.Namespace) -> ScenarioConfig:
    """Scenario from ``--config`` with command-line overrides applied and validated."""
    scenario = load_config(args.config) if args.config else ScenarioConfig().validate()
    experiment = {}
    for flag, key in (("trials", "n_trials"), ("seed", "base_seed"), ("jobs", "jobs"), ("out", "out_dir")):
        value = getattr(args, flag, None)
        if value is not None and not (flag == "seed" and args.command == "inspect-path"):
            experiment[key] = value
    if experiment:
        scenario = scenario.with_overrides(experiment=experiment).validate()
    return scenario


def output_root(scenario: ScenarioConfig, args: argparse.Namespace) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return scenario.output_root()


def cmd_run(scenario: ScenarioConfig, args: argparse.Namespace) -> int:
    out = ensure_directory(output_root(scenario, args) / scenario.name)
    write_effective_config(scenario, out / "effective_config.toml")
    result = run_experiment(
        scenario, args.planner, record_events=scenario.experiment.write_events,
        show_progress=not args.quiet,
    )
    write_experiment_outputs(result, out / args.planner, scenario.experiment.write_events)
    print(summary_table({args.planner: result}).to_string(index=False))
    return EXIT_OK


def cmd_compare(scenario: ScenarioConfig, args: argparse.Namespace) -> int:
    out = ensure_directory(output_root(scenario, args) / scenario.name)
    write_effective_config(scenario, out / "effective_config.toml")
    results = {}
    for planner in PLANNERS:
        results[planner] = run_experiment(
            scenario, planner, record_events=scenario.experiment.write_events,
            show_progress=not args.quiet,
        )
        write_experiment_outputs(results[planner], out / planner, scenario.experiment.write_events)
    summary = summary_table(results)
    paired = paired_deltas(results["adaptive"].records, results["lawnmower"].records)
    write_comparison_outputs(results, summary, out / "compare", paired)
    print(summary.to_string(index=False))
    print(
        f"paired final entropy delta (adaptive - lawnmower): {paired.attrs['mean']:.2f} bits "
        f"[{paired.attrs['ci95_low']:.2f}, {paired.attrs['ci95_high']:.2f}]"
    )
    return EXIT_OK


def cmd_sweep(scenario: ScenarioConfig, args: argparse.Namespace) -> int:
    out = ensure_directory(output_root(scenario, args) / scenario.name / f"sweep_{args.kind}")
    write_effective_config(scenario, out / "effective_config.toml")

    def write_variant(variant, variant_scenario, result):
        write_experiment_outputs(result, out / variant, write_event_streams=False)

    results = run_sweep(scenario, args.kind, show_progress=not args.quiet, on_variant=write_variant)
    summary = summary_table(results)
    write_comparison_outputs(results, summary, out)
    print(summary.to_string(index=False))
    return EXIT_OK


def cmd_inspect(scenario: ScenarioConfig, args: argparse.Namespace) -> int:
    out = ensure_directory(output_root(scenario, args) / scenario.name / f"inspect_{args.planner}_{args.seed}")
    write_effective_config(scenario, out / "effective_config.toml")
    outcome = simulate_trial(scenario, args.planner, args.seed, record_events=True, keep_maps=True)
    path = PolynomialPath(segments=list(outcome.record.segments))
    write_samples_csv(sample(path, args.dt), out / "trajectory.csv")
    write_events(outcome.events, out / "events.jsonl")
    write_trial_csv(outcome.record, out / "trial.csv")
    write_belief_csv(outcome.belief, out / "belief.csv")
    write_belief_pgm(outcome.belief, out / "belief.pgm")
    write_truth_pgm(outcome.truth, out / "truth.pgm")
    final = outcome.record.final
    print(
        f"seed {args.seed}: {outcome.record.n_measurements} measurements, "
        f"{path.total_time:.1f} s flown, final entropy {final.entropy_bits:.1f} bits, "
        f"classification rate {final.classification_rate:.3f}, F1 {final.f1:.3f}"
    )
    return EXIT_OK


def cmd_validate(scenario: ScenarioConfig, args: argparse.Namespace) -> int:
    print(f"OK {scenario.name} (digest {scenario.digest()})")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "inspect-path": cmd_inspect,
    "validate": cmd_validate,
}


def main(argv: Optional[list] = None) -> int:
    """
    Main CLI entry point.

    Args:
        argv: Command-line arguments (default: sys.argv[1:])

    Returns:
        Exit code: 0 success, 2 configuration error, 3 runtime failure
    """
    parser = create_parser()
    args = parser.parse_args(argv)

    log_level = "ERROR" if args.quiet else ("DEBUG" if args.verbose else "INFO")
    setup_logging(level=log_level, log_file=Path(args.log_file) if args.log_file else None)

    try:
        scenario = load_scenario(args)
        with log_operation(f"{args.command} {scenario.name}", log_memory=args.command != "validate"):
            return COMMANDS[args.command](scenario, args)

    except ConfigurationError as e:
        logger.error("Invalid configuration: %s", e)
        return EXIT_CONFIG

    except Exception as e:
        logger.error("%s failed: %s: %s", args.command, type(e).__name__, e, exc_info=args.verbose)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
