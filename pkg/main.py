"""
Main entry point for the hard-sphere cluster-bounds toolkit.

Usage:
    python main.py graphs --n 4                 # Count connected / two-connected graphs
    python main.py beta --d 1 --n-max 3         # Irreducible coefficients vs the hard-rod values
    python main.py coeffs                       # A, B1, C and B* coefficient tables
    python main.py free-energy --grid 5         # Lower/upper free-energy sweep
    python main.py domain                       # Convergence margins and the admissible density curve
    python main.py verify --suite sandwich      # Oracle checks on tiny instances
"""

import sys
import logging
import argparse

from config import Config
from expansion.errors import ToolkitError
from pipeline import SUBCOMMANDS, VERIFY_SUITES, run

# CLI flag -> Config attribute
CONFIG_OVERRIDES = {
    "d": "MODEL_DIMENSION",
    "r": "SMALL_RADIUS",
    "R": "BIG_RADIUS",
    "L": "BOX_LENGTH",
    "n_small": "N_SMALL",
    "n_big": "N_BIG",
    "order": "SERIES_ORDER",
    "samples": "MC_SAMPLES",
    "seed": "SEED",
    "workers": "MC_WORKERS",
    "output": "OUTPUT_DIR",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Cluster-expansion bounds for binary hard-sphere mixtures",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py graphs --n 4                 38 connected, 10 two-connected graphs
  python main.py beta --d 1 --n-max 3         Monte Carlo betas next to the exact hard-rod values
  python main.py free-energy --grid 4         Sweep rho_r and rho_R on a 4x4 grid
  python main.py free-energy --finite --L 10 --n-small 2 --n-big 1
  python main.py domain --r-min 0.5 --r-max 5 Admissible density curve over R
  python main.py verify --suite tonks --suite tree-graph
  python main.py verify --slack               Post a Slack summary when done

Settings come from the environment (or .env); flags override them.
        """,
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS, help="What to compute")

    model = parser.add_argument_group("model")
    model.add_argument("--d", type=int, help="Dimension (default: MODEL_DIMENSION)")
    model.add_argument("--r", type=float, help="Small radius")
    model.add_argument("--R", type=float, help="Big radius")
    model.add_argument("--L", type=float, help="Box side for --finite runs")
    model.add_argument("--n-small", type=int, help="Small-sphere count for --finite runs")
    model.add_argument("--n-big", type=int, help="Big-sphere count for --finite runs")
    model.add_argument("--finite", action="store_true", help="Evaluate in the periodic box instead of the limit")

    series = parser.add_argument_group("series and sampling")
    series.add_argument("--order", type=int, help="Series order (default: SERIES_ORDER)")
    series.add_argument("--samples", type=int, help="Monte Carlo samples per coefficient")
    series.add_argument("--seed", type=int, help="Root seed")
    series.add_argument("--workers", type=int, help="Threads for Monte Carlo shards")
    series.add_argument(
        "--allow-outside-domain",
        action="store_true",
        help="Evaluate series even where the convergence conditions fail",
    )

    selection = parser.add_argument_group("subcommand options")
    selection.add_argument("--n", type=int, help="graphs: largest vertex count (default: 5)")
    selection.add_argument("--n-max", type=int, help="beta: largest order (default: 3)")
    selection.add_argument("--grid", type=int, help="free-energy: points per density axis")
    selection.add_argument("--rho-small", type=float, action="append", help="free-energy: explicit rho_r values")
    selection.add_argument("--rho-big", type=float, action="append", help="free-energy: explicit rho_R values")
    selection.add_argument("--r-min", type=float, help="domain: smallest big radius on the curve")
    selection.add_argument("--r-max", type=float, help="domain: largest big radius on the curve")
    selection.add_argument(
        "--suite", choices=VERIFY_SUITES, action="append", help="verify: suite to run (repeatable; default: all)"
    )

    parser.add_argument("--output", help="Artifact directory (default: OUTPUT_DIR)")
    parser.add_argument(
        "--slack",
        action="store_true",
        help="Post a run summary to Slack after the run (requires SLACK_WEBHOOK_URL)",
    )
    parser.add_argument("--verbose", action="store_true", help="Debug logging")
    return parser


def apply_overrides(args: argparse.Namespace) -> None:
    """Copy the given CLI flags onto Config."""
    for flag, attribute in CONFIG_OVERRIDES.items():
        value = getattr(args, flag)
        if value is not None:
            setattr(Config, attribute, value)
    if args.allow_outside_domain:
        Config.ALLOW_OUTSIDE_DOMAIN = True


def main(argv=None):
    """Main entry point."""
    args = build_parser().parse_args(argv)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%H:%M:%S",
    )

    apply_overrides(args)
    try:
        Config.validate()
    except ValueError as e:
        print(f"\nConfiguration error: {e}\n")
        sys.exit(1)

    options = {
        "d": args.d,
        "n": args.n,
        "n_max": args.n_max,
        "grid": args.grid,
        "rho_small": args.rho_small,
        "rho_big": args.rho_big,
        "finite": args.finite,
        "r_min": args.r_min,
        "r_max": args.r_max,
        "suites": args.suite,
    }

    try:
        result = run(args.subcommand, options, notify_slack=args.slack)
    except ToolkitError as e:
        print(e.describe(), file=sys.stderr)
        sys.exit(e.exit_code)
    except KeyboardInterrupt:
        print("\nRun interrupted by user")
        sys.exit(0)

    print(result.summary())
    if result.failures:
        sys.exit(1)


if __name__ == "__main__":
    main()
