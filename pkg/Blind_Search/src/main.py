"""
Blind Search - Token Process Toolkit
Command-line frontend for exact computation, simulation, bounds and
optimization of blind-search step distributions on {0, ..., n}.

Subcommands:
- exact: T_a, A^(s), B^(s) and E(T) of one distribution
- simulate: Monte Carlo estimates for processes R and S
- potential: potential profile and per-state expected drop
- bounds: lower bound <= E <= upper bound report
- optimize: search for distributions with small E(T)
- continuous: precision study of the scale-invariant search on [0, 1]
- scaling: E and Phi_0 against (log2 n)^2 over powers of two
- compare: several strategies side by side

Exit codes: 0 success, 1 usage or unwritable output, 2 invalid distribution,
3 numerical limit.
"""

import os
import sys
import logging
import argparse
import copy
import json
from datetime import datetime
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.errors import DistributionError, NumericalError
from src.dist import from_spec
from src.exact import closed_form_oracle, deferred_expectation, hitting_profile, upper_bound, ORACLE_CAP
from src.chain import Process, SimSummary, estimate_expectation
from src.potential import DropReport, drop_bound_report, potential_lower_bound, potential_profile
from src.bounds import BoundsReport, ScalingRow, bounds_report, ratio_spread, scaling_rows
from src.optimize import (
    OptimizeReport,
    OptimizerSettings,
    StrategyRow,
    compare_strategies,
    optimize_full_simplex,
    optimize_interval_weights,
)
from src.continuous import SIGN_MODE, PrecisionRow, precision_scaling
from src.results_writer import FORMATS, OutputConfig, ResultsWriter, rows_of


# Configuration defaults
DEFAULT_CONFIG = {
    "exact": {
        "n_cap": 32768,
        "oracle_cap": 20
    },
    "simulation": {
        "runs": 100000,
        "workers": 1,
        "max_steps": None,
        "block_size": 64
    },
    "potential": {
        "C": 7.0,
        "c": 0.7071067811865476,
        "strict": False
    },
    "optimize": {
        "iters": 200,
        "eta0": 0.5,
        "fd_step": 1e-4,
        "mu1_floor": 1e-9,
        "patience": 50,
        "rel_tol": 1e-6,
        "coords_per_iter": 128
    },
    "continuous": {
        "x0": 0.3,
        "eps_list": [2.0 ** -k for k in range(5, 13)],
        "runs": 1000,
        "max_steps": 1000000
    },
    "scaling": {
        "n_min_exp": 4,
        "n_max_exp": 14
    },
    "logging": {
        "level": "WARNING",
        "directory": None
    },
    "output": {
        "sidecar": False
    }
}

COMMANDS = ("exact", "simulate", "potential", "bounds", "optimize", "continuous", "scaling", "compare")
NEEDS_N = ("exact", "simulate", "potential", "bounds", "optimize", "compare")
DEFAULT_STRATEGIES = "harmonic,pow2,uniform,adversarial"
SEED_ENV = "BLINDSEARCH_SEED"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DISTRIBUTION = 2
EXIT_NUMERICAL = 3

logger = logging.getLogger("BlindSearch")


class UsageArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with EXIT_USAGE."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    """Validated settings of one CLI invocation."""
    subcommand: str
    n: Optional[int]
    dist_spec: str
    seed: int
    runs: int
    workers: int
    fmt: str = "csv"
    out_path: Optional[str] = None
    options: Dict[str, Any] = field(default_factory=dict)


def _parse_seed(value: str) -> int:
    """Argparse type parser for 64-bit seeds."""
    try:
        seed = int(value, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"Invalid seed '{value}'")
    if not 0 <= seed < 2 ** 64:
        raise argparse.ArgumentTypeError(f"Seed must lie in [0, 2^64), got {seed}")
    return seed


def _parse_float_list(value: str) -> List[float]:
    """Argparse type parser for comma-separated floats."""
    try:
        return [float(item) for item in value.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Invalid list of numbers '{value}'")


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "-c", "--config",
        help="Path to configuration file (JSON)"
    )
    common.add_argument(
        "-v", "--verbose",
        action="store_true",
        help="Enable verbose logging"
    )
    common.add_argument(
        "--n",
        type=int,
        help="Domain size n (states 0..n)"
    )
    common.add_argument(
        "--dist",
        default="harmonic",
        help=(
            "Step distribution: harmonic | pow2 | uniform | adversarial | "
            "adversarial:B=<float> | file:<path> (default: harmonic)"
        )
    )
    common.add_argument(
        "--seed",
        type=_parse_seed,
        help=f"Master seed (default: ${SEED_ENV} or 0)"
    )
    common.add_argument(
        "--runs",
        type=int,
        help="Number of simulated runs"
    )
    common.add_argument(
        "--workers",
        type=int,
        help="Worker processes (results do not depend on this)"
    )
    common.add_argument(
        "--max-steps",
        type=int,
        help="Censoring limit per run"
    )
    common.add_argument(
        "--format",
        choices=FORMATS,
        default="csv",
        help="Output format (default: csv)"
    )
    common.add_argument(
        "--out",
        help="Output file (default: standard output)"
    )
    common.add_argument(
        "--n-cap-override",
        type=int,
        help="Raise the n cap of the O(n^2) computations"
    )
    common.add_argument(
        "--metadata",
        action="store_true",
        help="Write a metadata sidecar with timestamps"
    )
    common.add_argument(
        "-l", "--log-dir",
        help="Also write the log to this directory"
    )
    return common


def build_arg_parser() -> argparse.ArgumentParser:
    """Build the command-line parser for Blind Search."""
    common = _common_parser()
    parser = UsageArgumentParser(
        prog="blind-search",
        description="Blind Search - exact, simulated and bounded hitting times of the token process"
    )
    subparsers = parser.add_subparsers(dest="subcommand", metavar="COMMAND")
    subparsers.required = True

    exact = subparsers.add_parser("exact", parents=[common], help="Exact expected hitting times")
    exact.add_argument("--emit-dist", help="Write the distribution file to this path")
    exact.add_argument("--oracle", action="store_true", help=f"Also evaluate the closed form (n <= {ORACLE_CAP})")

    simulate = subparsers.add_parser("simulate", parents=[common], help="Monte Carlo estimation")
    simulate.add_argument(
        "--process",
        choices=("R", "S", "both"),
        default="both",
        help="Process to simulate (default: both)"
    )
    simulate.add_argument("--keep-steps", action="store_true", help="Keep per-run step counts (JSON only)")

    potential = subparsers.add_parser("potential", parents=[common], help="Potential profile and drops")
    potential.add_argument("--C", type=float, dest="drop_constant", help="Drop constant (default: 7)")
    potential.add_argument("--strict", action="store_true", help="Reject C below the computed maximum drop")

    bounds = subparsers.add_parser("bounds", parents=[common], help="Lower bound, exact value, upper bound")
    bounds.add_argument("--C", type=float, dest="drop_constant", help="Drop constant (default: 7)")
    bounds.add_argument("--strict", action="store_true", help="Reject C below the computed maximum drop")

    optimize = subparsers.add_parser("optimize", parents=[common], help="Search for good distributions")
    optimize.add_argument(
        "--family",
        choices=("full", "interval"),
        default="full",
        help="Full simplex or interval masses on powers of two (default: full)"
    )
    optimize.add_argument("--iters", type=int, help="Iteration budget")
    optimize.add_argument("--emit-dist", help="Write the best distribution to this path")

    continuous = subparsers.add_parser("continuous", parents=[common], help="Scale-invariant search on [0, 1]")
    continuous.add_argument("--eps", type=_parse_float_list, help="Comma-separated epsilons in (0, 1/4)")
    continuous.add_argument("--x0", type=float, help="Position of the optimum (default: 0.3)")

    scaling = subparsers.add_parser("scaling", parents=[common], help="Sweep n = 2^k")
    scaling.add_argument("--n-min-exp", type=int, help="Smallest exponent k (default: 4)")
    scaling.add_argument("--n-max-exp", type=int, help="Largest exponent k (default: 14)")

    compare = subparsers.add_parser("compare", parents=[common], help="Compare strategies")
    compare.add_argument(
        "--strategies",
        default=DEFAULT_STRATEGIES,
        help=f"Comma-separated dist specs (default: {DEFAULT_STRATEGIES})"
    )
    return parser


def _validate_args(args: argparse.Namespace, parser: argparse.ArgumentParser) -> None:
    """Validate CLI argument combinations."""
    if args.subcommand in NEEDS_N and args.n is None:
        parser.error(f"{args.subcommand} requires --n")
    if args.n is not None and args.n < 1:
        parser.error("--n must be at least 1.")
    for flag in ("runs", "workers", "max_steps", "n_cap_override"):
        value = getattr(args, flag, None)
        if value is not None and value < 1:
            parser.error(f"--{flag.replace('_', '-')} must be at least 1.")
    if getattr(args, "iters", None) is not None and args.iters < 0:
        parser.error("--iters must not be negative.")
    if getattr(args, "drop_constant", None) is not None and args.drop_constant <= 0:
        parser.error("--C must be positive.")
    if getattr(args, "eps", None) is not None and not args.eps:
        parser.error("--eps needs at least one value.")
    if getattr(args, "x0", None) is not None and not 0.0 <= args.x0 <= 1.0:
        parser.error("--x0 must lie in [0, 1].")
    lo, hi = getattr(args, "n_min_exp", None), getattr(args, "n_max_exp", None)
    if lo is not None and lo < 0 or hi is not None and hi < 0:
        parser.error("--n-min-exp and --n-max-exp must not be negative.")
    if lo is not None and hi is not None and lo > hi:
        parser.error("--n-min-exp must not exceed --n-max-exp.")
    if args.seed is None and os.environ.get(SEED_ENV):
        try:
            args.seed = _parse_seed(os.environ[SEED_ENV])
        except argparse.ArgumentTypeError as e:
            parser.error(f"{SEED_ENV}: {e}")


def parse_cli_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse and validate CLI arguments."""
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    _validate_args(args, parser)
    return args


def _deep_merge_dict(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge dictionaries, preserving nested defaults."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge_dict(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(config_path: str) -> dict:
    """Load configuration from JSON file."""
    with open(config_path, 'r') as f:
        return json.load(f)


def build_config(args: argparse.Namespace) -> dict:
    """DEFAULT_CONFIG, then the config file, then command-line flags."""
    config = _deep_merge_dict(DEFAULT_CONFIG, {})
    if args.config:
        config = _deep_merge_dict(config, load_config(args.config))

    if args.n_cap_override is not None:
        config["exact"]["n_cap"] = args.n_cap_override
    if args.runs is not None:
        config["simulation"]["runs"] = args.runs
        config["continuous"]["runs"] = args.runs
    if args.workers is not None:
        config["simulation"]["workers"] = args.workers
    if args.max_steps is not None:
        config["simulation"]["max_steps"] = args.max_steps
        config["continuous"]["max_steps"] = args.max_steps
    if getattr(args, "drop_constant", None) is not None:
        config["potential"]["C"] = args.drop_constant
    if getattr(args, "strict", False):
        config["potential"]["strict"] = True
    if getattr(args, "iters", None) is not None:
        config["optimize"]["iters"] = args.iters
    if getattr(args, "eps", None) is not None:
        config["continuous"]["eps_list"] = args.eps
    if getattr(args, "x0", None) is not None:
        config["continuous"]["x0"] = args.x0
    if getattr(args, "n_min_exp", None) is not None:
        config["scaling"]["n_min_exp"] = args.n_min_exp
    if getattr(args, "n_max_exp", None) is not None:
        config["scaling"]["n_max_exp"] = args.n_max_exp
    if args.log_dir:
        config["logging"]["directory"] = args.log_dir
    if args.verbose:
        config["logging"]["level"] = "DEBUG"
    if args.metadata:
        config["output"]["sidecar"] = True
    return config


def build_run_config(args: argparse.Namespace, config: dict) -> RunConfig:
    """Collect the settings one subcommand needs."""
    options = {
        key: value
        for key, value in vars(args).items()
        if key in ("emit_dist", "oracle", "process", "keep_steps", "family", "strategies")
    }
    return RunConfig(
        subcommand=args.subcommand,
        n=args.n,
        dist_spec=args.dist,
        seed=args.seed if args.seed is not None else 0,
        runs=config["simulation"]["runs"],
        workers=config["simulation"]["workers"],
        fmt=args.format,
        out_path=args.out,
        options=options,
    )


def setup_logging(config: dict) -> None:
    """Configure application logging; data goes to stdout, logs to stderr."""
    log_level = getattr(
        logging,
        str(config["logging"]["level"]).upper(),
        logging.WARNING
    )
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]

    directory = config["logging"].get("directory")
    if directory:
        log_dir = Path(directory)
        log_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_dir / f"blind_search_{datetime.now():%Y%m%d}.log"))

    logging.basicConfig(
        level=log_level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        handlers=handlers
    )
    logging.getLogger("BlindSearch").setLevel(log_level)


# Result of a handler: rows, CSV header, JSON payload, sidecar extras
Outcome = Tuple[List[dict], Tuple[str, ...], Any, Dict[str, Any]]


def _run_exact(run: RunConfig, config: dict) -> Outcome:
    dist = from_spec(run.dist_spec, run.n)
    n_cap = config["exact"]["n_cap"]
    profile = hitting_profile(dist, n_cap=n_cap)
    deferred = deferred_expectation(dist, n_cap=n_cap)

    rows = [
        {"a": a, "t": t, "a_uniform": avg, "b": b}
        for a, (t, avg, b) in enumerate(zip(
            profile.t.tolist(), profile.a_uniform.tolist(), deferred.b.tolist()
        ))
    ]
    payload = profile.to_dict()
    payload.update({
        "name": dist.name,
        "b": deferred.b.tolist(),
        "upper_bound": upper_bound(dist),
        "cross_check_error": profile.cross_check_error,
    })
    if run.options.get("oracle"):
        payload["closed_form"] = closed_form_oracle(dist, cap=config["exact"]["oracle_cap"])

    if run.options.get("emit_dist"):
        dist.save(run.options["emit_dist"])
    return rows, ("a", "t", "a_uniform", "b"), payload, {"dist": run.dist_spec}


def _run_simulate(run: RunConfig, config: dict) -> Outcome:
    dist = from_spec(run.dist_spec, run.n)
    sim = config["simulation"]
    choice = run.options.get("process", "both")
    processes = [Process.R, Process.S] if choice == "both" else [Process(choice)]

    summaries = [
        estimate_expectation(
            dist,
            process,
            runs=run.runs,
            master_seed=run.seed,
            workers=run.workers,
            max_steps=sim["max_steps"],
            block_size=sim["block_size"],
            keep_steps=bool(run.options.get("keep_steps")),
        )
        for process in processes
    ]
    payload = {"dist": run.dist_spec, "summaries": [s.to_dict() for s in summaries]}
    return rows_of(summaries), SimSummary.CSV_FIELDS, payload, {"workers": run.workers}


def _run_potential(run: RunConfig, config: dict) -> Outcome:
    dist = from_spec(run.dist_spec, run.n)
    pot = config["potential"]
    profile = potential_profile(dist, c=pot["c"])
    report = drop_bound_report(dist, profile, n_cap=config["exact"]["n_cap"])
    lower = potential_lower_bound(dist, pot["C"], strict=pot["strict"], profile=profile, report=report)

    payload = {
        "name": dist.name,
        "C": pot["C"],
        "lower_bound": lower,
        "within_bounds": report.within_bounds(),
        "psi_check": profile.psi_check().tolist(),
        "big_psi": profile.big_psi.tolist(),
        "profile": profile.to_dict(),
        "drop_report": report.to_dict(),
    }
    return report.to_rows(), DropReport.CSV_FIELDS, payload, {"dist": run.dist_spec}


def _run_bounds(run: RunConfig, config: dict) -> Outcome:
    dist = from_spec(run.dist_spec, run.n)
    pot = config["potential"]
    report = bounds_report(dist, C=pot["C"], strict=pot["strict"], n_cap=config["exact"]["n_cap"])
    return [report.to_row()], BoundsReport.CSV_FIELDS, report.to_dict(), {"dist": run.dist_spec}


def _run_optimize(run: RunConfig, config: dict) -> Outcome:
    opt = config["optimize"]
    settings = OptimizerSettings(
        iters=opt["iters"],
        eta0=opt["eta0"],
        fd_step=opt["fd_step"],
        mu1_floor=opt["mu1_floor"],
        patience=opt["patience"],
        rel_tol=opt["rel_tol"],
        coords_per_iter=opt["coords_per_iter"],
        workers=run.workers,
    )
    optimizer = optimize_interval_weights if run.options.get("family") == "interval" else optimize_full_simplex
    report: OptimizeReport = optimizer(run.n, iters=opt["iters"], seed=run.seed, settings=settings)

    if run.options.get("emit_dist"):
        report.best_dist.save(run.options["emit_dist"])
    return report.trace_rows(), OptimizeReport.CSV_FIELDS, report.to_dict(), {"family": report.family}


def _run_continuous(run: RunConfig, config: dict) -> Outcome:
    cont = config["continuous"]
    rows, fit = precision_scaling(
        cont["eps_list"],
        runs=cont["runs"],
        seed=run.seed,
        workers=run.workers,
        x0=cont["x0"],
        max_steps=cont["max_steps"],
    )
    payload = {
        "x0": cont["x0"],
        "sign_mode": SIGN_MODE,
        "rows": [row.to_dict() for row in rows],
        "fit": fit.to_dict(),
    }
    return rows_of(rows), PrecisionRow.CSV_FIELDS, payload, {"sign_mode": SIGN_MODE, "x0": cont["x0"]}


def _run_scaling(run: RunConfig, config: dict) -> Outcome:
    sc = config["scaling"]
    exps = range(sc["n_min_exp"], sc["n_max_exp"] + 1)
    rows = scaling_rows(run.dist_spec, exps, C=config["potential"]["C"], n_cap=config["exact"]["n_cap"])
    payload = {
        "dist": run.dist_spec,
        "rows": [row.to_dict() for row in rows],
        "spread_min_n": 256,
        "e_ratio_spread": ratio_spread(rows, "e_ratio", min_n=256),
        "phi0_ratio_spread": ratio_spread(rows, "phi0_ratio", min_n=256),
    }
    return rows_of(rows), ScalingRow.CSV_FIELDS, payload, {"dist": run.dist_spec}


def _run_compare(run: RunConfig, config: dict) -> Outcome:
    names = [name.strip() for name in run.options.get("strategies", DEFAULT_STRATEGIES).split(",") if name.strip()]
    rows = compare_strategies(run.n, names, C=config["potential"]["C"], n_cap=config["exact"]["n_cap"])
    payload = {"n": run.n, "rows": [row.to_dict() for row in rows]}
    return rows_of(rows), StrategyRow.CSV_FIELDS, payload, {"strategies": names}


HANDLERS: Dict[str, Callable[[RunConfig, dict], Outcome]] = {
    "exact": _run_exact,
    "simulate": _run_simulate,
    "potential": _run_potential,
    "bounds": _run_bounds,
    "optimize": _run_optimize,
    "continuous": _run_continuous,
    "scaling": _run_scaling,
    "compare": _run_compare,
}


def run(run_config: RunConfig, config: Optional[dict] = None) -> int:
    """
    Dispatch one subcommand and write its output.

    Returns:
        Exit code: 0, 1 when an output path cannot be written, or 2 / 3 for
        distribution and numerical errors
    """
    config = _deep_merge_dict(DEFAULT_CONFIG, config or {})
    started = datetime.now()
    writer = ResultsWriter(OutputConfig(
        fmt=run_config.fmt,
        out_path=run_config.out_path,
        sidecar=bool(config["output"]["sidecar"]),
        session_metadata={
            "n": run_config.n,
            "seed": run_config.seed,
            "runs": run_config.runs,
            "argv": sys.argv[1:],
        },
    ))

    try:
        rows, fieldnames, payload, extra = HANDLERS[run_config.subcommand](run_config, config)
        text = writer.render(rows, fieldnames, payload)
    except NumericalError as e:
        logger.error(f"{run_config.subcommand}: {e}")
        return EXIT_NUMERICAL
    except (DistributionError, ValueError) as e:
        logger.error(f"{run_config.subcommand}: {e}")
        return EXIT_DISTRIBUTION
    except OSError as e:
        logger.error(f"{run_config.subcommand}: cannot write output: {e}")
        return EXIT_USAGE

    try:
        writer.write(text)
        writer.write_metadata(run_config.subcommand, started, extra)
    except OSError as e:
        logger.error(f"{run_config.subcommand}: cannot write output: {e}")
        return EXIT_USAGE
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    args = parse_cli_args(argv)
    try:
        config = build_config(args)
    except (OSError, json.JSONDecodeError) as e:
        print(f"blind-search: cannot read config {args.config}: {e}", file=sys.stderr)
        return EXIT_USAGE
    setup_logging(config)
    return run(build_run_config(args, config), config)


if __name__ == "__main__":
    sys.exit(main())
