# moonshot_sim/cli.py

import argparse
import logging
import os
import sys
import traceback
from typing import List, Optional

from .core import config
from .core import report as reports
from .core.campaign import run_campaign, sweep_mutants
from .core.errors import ConfigError, ForgeryAttempt, TraceFormatError, TraceMismatch
from .core.explorer import explore
from .core.network import replay, run
from .core.utils import output_path, parse_seed_range

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VIOLATION = 2


class _ArgumentParser(argparse.ArgumentParser):
    """Reports usage errors with exit code 1; 2 is reserved for safety violations."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--config",
        "-c",
        default=None,
        help="Configuration file of 'key = value' lines. Built-in defaults are used when omitted.",
    )
    parser.add_argument(
        "--out",
        "-o",
        default=config.default_output_dir(),
        help=f"Output directory for traces and reports (environment: {config.OUTPUT_DIR_ENV_VAR}).",
    )
    parser.add_argument(
        "--mutate",
        default=None,
        help="Protocol mutation to enable: " + ", ".join(m.value for m in config.Mutation) + ", or none.",
    )
    parser.add_argument(
        "--adversary",
        default=None,
        help="Adversary strategy: " + ", ".join(s.value for s in config.AdversaryStrategy) + ".",
    )
    parser.add_argument("--max-steps", type=int, default=None, help="Maximum events per simulation.")

    verbosity_group = parser.add_mutually_exclusive_group()
    verbosity_group.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        help="Enable detailed output, including per-event debug logs from the simulator.",
    )
    verbosity_group.add_argument(
        "--silent",
        "-s",
        action="store_true",
        help="Suppress all informational output. Only errors will be printed.",
    )


def _add_jobs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--jobs", "-j", type=int, default=1, help="Worker processes for independent seeds."
    )


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """
    Parses command-line arguments for the simulator.

    Each subcommand shares the configuration, override and verbosity flags;
    defaults come from the ``core.config`` module.

    Args:
        argv: Argument list; ``sys.argv[1:]`` when None.

    Returns:
        An argparse.Namespace object containing the parsed command-line arguments.
    """
    parser = _ArgumentParser(
        prog="moonshot-sim",
        description="Deterministic simulator and safety checker for Pipelined Moonshot BFT.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    run_parser = commands.add_parser(
        "run",
        help="Run one seed (or a seed range) and check safety.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    _add_common(run_parser)
    run_parser.add_argument("--seed", type=int, default=None, help="PRNG seed for this run.")
    run_parser.add_argument(
        "--seeds", default=None, help="Run seeds A..B in order, stopping at the first violation."
    )
    _add_jobs(run_parser)

    campaign_parser = commands.add_parser(
        "campaign",
        help="Run many independent seeds and summarize.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    _add_common(campaign_parser)
    campaign_parser.add_argument("--seeds", default="0..99", help="Inclusive seed range A..B.")
    _add_jobs(campaign_parser)

    replay_parser = commands.add_parser(
        "replay",
        help="Re-execute a trace file and verify every step.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    replay_parser.add_argument("trace", help="Trace file written by 'run'.")
    replay_group = replay_parser.add_mutually_exclusive_group()
    replay_group.add_argument("--verbose", "-v", action="store_true", help="Enable debug logs.")
    replay_group.add_argument("--silent", "-s", action="store_true", help="Only print errors.")

    explore_parser = commands.add_parser(
        "explore",
        help="Exhaustively explore interleavings up to a depth.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    _add_common(explore_parser)
    explore_parser.add_argument(
        "--depth", type=int, default=config.DEFAULT_EXPLORE_DEPTH, help="Events explored after bootstrap."
    )
    explore_parser.add_argument(
        "--state-budget",
        type=int,
        default=config.DEFAULT_EXPLORE_STATE_BUDGET,
        help="Distinct states visited before the exploration is reported incomplete.",
    )
    explore_parser.add_argument(
        "--timers", action="store_true", help="Also schedule timer expiries."
    )

    mutants_parser = commands.add_parser(
        "mutants",
        help="Check that the safety monitor catches every protocol mutation.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    _add_common(mutants_parser)
    mutants_parser.add_argument("--seeds", default="0..199", help="Seed range tried per adversary.")
    mutants_parser.add_argument(
        "--depth",
        type=int,
        default=config.DEFAULT_EXPLORE_DEPTH,
        help="Exploration depth for mutants no seed kills (0 disables exploration).",
    )
    _add_jobs(mutants_parser)

    args = parser.parse_args(argv)

    if args.silent:
        args.verbose = False

    return args


def _configure_logging(args: argparse.Namespace) -> None:
    if args.verbose:
        level = logging.DEBUG
    elif args.silent:
        level = logging.ERROR
    else:
        level = logging.WARNING
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def _say(args: argparse.Namespace, text: str) -> None:
    if not args.silent:
        print(text, end="" if text.endswith("\n") else "\n")


def _load(args: argparse.Namespace) -> config.SimConfig:
    cfg = config.load_config(args.config)
    return cfg.with_overrides(
        seed=getattr(args, "seed", None),
        mutation=args.mutate,
        adversary_strategy=args.adversary,
        max_steps=args.max_steps,
    )


def _seeds(text: str) -> range:
    try:
        first, last = parse_seed_range(text)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return range(first, last + 1)


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if args.seeds:
        seeds = _seeds(args.seeds)
        summary = run_campaign(
            cfg, seeds.start, seeds.stop - 1, args.jobs, args.out, stop_on_violation=True
        )
        _say(args, reports.render_campaign_summary(summary))
        return EXIT_OK if summary.safe else EXIT_VIOLATION

    trace_path = output_path(args.out, config.TRACE_FILENAME_TEMPLATE, cfg.seed)
    if args.verbose:
        print(f"Running seed {cfg.seed}, trace: {trace_path}")
    result = run(cfg, trace_path)
    text = reports.render_run_report(result)
    reports.write_report(text, output_path(args.out, config.REPORT_FILENAME_TEMPLATE, cfg.seed))
    _say(args, text)
    return EXIT_OK if result.safe else EXIT_VIOLATION


def cmd_campaign(args: argparse.Namespace) -> int:
    cfg = _load(args)
    seeds = _seeds(args.seeds)
    if args.verbose:
        print(f"Running {len(seeds)} seed(s) with {args.jobs} job(s)...")
    summary = run_campaign(cfg, seeds.start, seeds.stop - 1, args.jobs, args.out)
    _say(args, reports.render_campaign_summary(summary))
    return EXIT_OK if summary.safe else EXIT_VIOLATION


def cmd_replay(args: argparse.Namespace) -> int:
    if not os.path.isfile(args.trace):
        raise FileNotFoundError(f"Trace file '{args.trace}' does not exist")
    result = replay(args.trace)
    _say(args, reports.render_run_report(result))
    return EXIT_OK if result.safe else EXIT_VIOLATION


def cmd_explore(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if args.depth < 0:
        raise ConfigError(f"--depth must be >= 0, got {args.depth}")
    result = explore(cfg, args.depth, state_budget=args.state_budget, timers=args.timers)
    _say(args, reports.render_explore_report(result))
    if not result.complete and not args.silent:
        print("Warning: exploration stopped at the state budget; coverage is partial.", file=sys.stderr)
    return EXIT_OK if result.safe else EXIT_VIOLATION


def cmd_mutants(args: argparse.Namespace) -> int:
    cfg = _load(args)
    seeds = _seeds(args.seeds)
    results = sweep_mutants(
        cfg, seeds.start, seeds.stop - 1, args.jobs, explore_depth=args.depth, out_dir=args.out
    )
    _say(args, reports.render_mutant_table(results))
    return EXIT_OK if all(r.killed for r in results) else EXIT_VIOLATION


COMMANDS = {
    "run": cmd_run,
    "campaign": cmd_campaign,
    "replay": cmd_replay,
    "explore": cmd_explore,
    "mutants": cmd_mutants,
}


def main(argv: Optional[List[str]] = None):
    """
    Main function for the Command Line Interface.

    Dispatches to the selected subcommand and maps outcomes to exit codes:
    0 when every check passed, 1 for usage, configuration or trace errors,
    2 when a safety violation was detected (or a mutant survived).
    Includes top-level error handling like every other entry point.
    """
    args = parse_args(argv)
    exit_code = EXIT_OK
    _configure_logging(args)

    try:
        if args.verbose:
            print("Verbose mode enabled.")
        exit_code = COMMANDS[args.command](args)

    except SystemExit as e:
        exit_code = e.code if isinstance(e.code, int) else EXIT_ERROR
    except KeyboardInterrupt:
        print("\nOperation cancelled by user.", file=sys.stderr)
        exit_code = 130
    except ConfigError as e:
        print(f"\nConfiguration Error: {e}", file=sys.stderr)
        exit_code = EXIT_ERROR
    except TraceMismatch as e:
        print(f"\nReplay Error: {e}", file=sys.stderr)
        exit_code = EXIT_ERROR
    except (TraceFormatError, ForgeryAttempt) as e:
        print(f"\nInput Error: {e}", file=sys.stderr)
        if args.verbose:
            traceback.print_exc(file=sys.stderr)
        exit_code = EXIT_ERROR
    except FileNotFoundError as e:
        print(f"\nFile System Error: {e}", file=sys.stderr)
        exit_code = EXIT_ERROR
    except OSError as e:
        print(f"\nOS Error: {e}", file=sys.stderr)
        if args.verbose:
            traceback.print_exc(file=sys.stderr)
        exit_code = EXIT_ERROR
    except RuntimeError as e:
        print(f"\nRuntime Error: {e}", file=sys.stderr)
        if args.verbose:
            traceback.print_exc(file=sys.stderr)
        exit_code = EXIT_ERROR
    except Exception as e:
        print("\n--- Unexpected Error ---", file=sys.stderr)
        print(f"An unhandled error occurred: {e}", file=sys.stderr)
        print("\n--- Traceback ---", file=sys.stderr)
        traceback.print_exc(file=sys.stderr)
        print("--- End Traceback ---", file=sys.stderr)
        exit_code = EXIT_ERROR
    finally:
        if not args.silent:
            if exit_code == EXIT_OK:
                print("Script finished successfully.")
            else:
                print(f"Script finished with errors (exit code {exit_code}).")
        sys.exit(exit_code)


if __name__ == "__main__":
    main()
