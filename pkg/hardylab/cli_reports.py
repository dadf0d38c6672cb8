"""
Command-line front end: `python -m hardylab <subcommand> ...`.

Exit codes: 0 when every asserted check passes, 1 when any fails (or a Monte
Carlo budget is exhausted), 2 for usage errors, unreadable inputs, invalid
parameters and memory-guard violations.
"""

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from .brownian_lab import ALPHA0, ALPHA_GENERATORS, ESTIMATORS, BrownianConfig, estimate_alpha
from .brownian_lab import exit_time_summary, exit_uniformity, sample_paths
from .decompositions import davis_garsia_decompose, hardy_thin_thick
from .exit_monitor import ExitBudgetError
from .inequality_suite import (
    CHECKS,
    EXACT_CHECKS,
    InequalityReport,
    UnknownCheckError,
    VECTOR_SIZE,
    convexity_suite,
    run_suite,
    scalar_suite,
)
from .martingale_core import MartingaleShapeError, MemoryGuardError, load_table, random_hardy, random_martingale
from .paths import trace_paths
from .report_store import FORMATS, ReportStore, ReportStoreError, load_reports
from .settings import Settings
from .torus_fn import NotHardyError, dft, eval_disk, random_analytic
from .validation import validate_degree, validate_grid_size, validate_input_path, validate_output_path

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
UNIFORMITY_LEVEL = 1e-3
DEFAULT_BINS = 64

# Monte Carlo scales; flags given on the command line win over the preset,
# the preset wins over HARDYLAB_* settings. "paths" is per thin-thick slice,
# "harness_paths" feeds the exit-angle and exit-time statistics.
HARNESS_PRESETS = {
    "desk": {},
    "acceptance": {"paths": 10_000, "harness_paths": 100_000, "dt": 1e-4,
                   "max_steps": 1_000_000, "bins": 64},
}


class UsageError(Exception):
    """Bad flags or inputs; reported on stderr with exit code 2."""
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _require(result):
    is_valid, error_msg = result
    if not is_valid:
        raise UsageError(error_msg)


def _common(settings):
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--seed", type=int, default=settings.seed,
                        help="base seed (default: HARDYLAB_SEED or %(default)s)")
    parent.add_argument("--threads", type=int, default=settings.threads,
                        help="worker threads (default: HARDYLAB_THREADS or available CPUs)")
    parent.add_argument("--out", default=None, help="report file (default: stdout)")
    parent.add_argument("--format", choices=FORMATS, default="json",
                        help="report format: NDJSON records plus summary, or flat CSV")
    parent.add_argument("--log-level", default=settings.log_level,
                        help="logging level (default: HARDYLAB_LOG_LEVEL or %(default)s)")
    return parent


def _grid_flags(parser, settings, n=3, degree=3, grid=None):
    parser.add_argument("--n", type=int, default=n, help="martingale horizon n (default: %(default)s)")
    parser.add_argument("--grid", type=int, default=grid or settings.grid,
                        help="grid resolution N, a power of two (default: %(default)s)")
    parser.add_argument("--degree", type=int, default=degree,
                        help="analytic polynomial degree per step (default: %(default)s)")


def _mc_flags(parser, settings):
    parser.add_argument("--paths", type=int, default=None,
                        help=f"Brownian paths per slice (default: preset, HARDYLAB_PATHS or {settings.paths})")
    parser.add_argument("--dt", type=float, default=None,
                        help=f"time step (default: preset, HARDYLAB_DT or {settings.dt})")
    parser.add_argument("--max-steps", type=int, default=None,
                        help=f"step budget per path, doubled on retry "
                             f"(default: preset, HARDYLAB_MAX_STEPS or {settings.max_steps})")
    parser.add_argument("--estimator", choices=ESTIMATORS, default="exit",
                        help="projection coefficient estimator (default: %(default)s)")


def _harness_flags(parser):
    parser.add_argument("--preset", choices=tuple(HARNESS_PRESETS), default="desk",
                        help="Monte Carlo scale: desk (environment defaults) or acceptance "
                             "(10^4 paths per slice, 10^5 harness paths, dt 1e-4, 64 bins)")
    parser.add_argument("--bins", type=int, default=None,
                        help=f"exit-angle histogram bins (default: preset or {DEFAULT_BINS})")
    parser.add_argument("--tol", type=float, default=UNIFORMITY_LEVEL,
                        help="chi-square level for the exit-angle test (default: %(default)s)")


def build_parser(settings=None):
    settings = settings or Settings()
    common = _common(settings)
    parser = _Parser(prog="hardylab", description="Numerical laboratory for Hardy martingale inequalities.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    suite = sub.add_parser("verify-suite", parents=[common], help="run every exact-mode check")
    _grid_flags(suite, settings, grid=16)
    suite.add_argument("--seeds", type=int, default=100, help="consecutive seeds per check (default: %(default)s)")
    suite.add_argument("--checks", default=",".join(EXACT_CHECKS),
                       help="comma-separated check ids (default: all exact-mode checks)")
    suite.add_argument("--scalar-samples", type=int, default=100_000,
                       help="points for the scalar lemma and the square-root bound, 0 to skip "
                            "(default: %(default)s)")
    suite.add_argument("--scalar-instances", type=int, default=None,
                       help=f"random (M, u) pairs for the two averaged inequalities, each u holding "
                            f"{VECTOR_SIZE} values (default: scalar samples / {VECTOR_SIZE})")
    suite.add_argument("--convexity-trials", type=int, default=0,
                       help="random instances for the complex convexity check, 0 to skip (default: %(default)s)")
    suite.add_argument("--sweep-points", type=int, default=0,
                       help="grid points per axis for the Laplacian sweep, 0 to skip (default: %(default)s)")

    brownian = sub.add_parser("verify-brownian", parents=[common], help="run the Monte Carlo thin-thick check")
    _grid_flags(brownian, settings, n=2, grid=16)
    _mc_flags(brownian, settings)
    _harness_flags(brownian)
    brownian.add_argument("--seeds", type=int, default=10, help="consecutive seeds (default: %(default)s)")
    brownian.add_argument("--harness-paths", type=int, default=None,
                          help="paths for the exit statistics (default: preset or --paths)")

    decompose = sub.add_parser("decompose", help="decompose one martingale and write G, B and diagnostics")
    which = decompose.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    for kind, text in (("davis-garsia", "Davis-Garsia split of a general martingale"),
                       ("hardy", "thin-thick split of a Hardy martingale")):
        item = which.add_parser(kind, parents=[common], help=text)
        _grid_flags(item, settings, n=2, grid=16)
        item.add_argument("--input", default=None,
                          help="martingale file (.npz or .csv); default: a random martingale from --seed")
        if kind == "hardy":
            _mc_flags(item, settings)

    alpha = sub.add_parser("estimate-alpha", parents=[common], help="bisect the complex convexity constant")
    alpha.add_argument("--trials", type=int, default=1000, help="sampled instances (default: %(default)s)")
    alpha.add_argument("--generator", choices=ALPHA_GENERATORS, default="random-polynomial",
                       help="instance generator (default: %(default)s)")
    alpha.add_argument("--grid", type=int, default=settings.grid, help="quadrature points (default: %(default)s)")
    alpha.add_argument("--degree", type=int, default=3, help="largest sampled degree (default: %(default)s)")
    alpha.add_argument("--tol", type=float, default=1e-4, help="bisection bracket width (default: %(default)s)")

    simulate = sub.add_parser("simulate-paths", parents=[common], help="exit statistics and path dumps")
    _mc_flags(simulate, settings)
    _harness_flags(simulate)
    simulate.add_argument("--grid", type=int, default=settings.grid,
                          help="grid of the analytic h used for |h(B_t)| (default: %(default)s)")
    simulate.add_argument("--degree", type=int, default=3, help="degree of h (default: %(default)s)")
    simulate.add_argument("--count", type=int, default=10, help="paths to dump (default: %(default)s)")
    simulate.add_argument("--dump-paths", default=None, help="CSV file for (path, t, re B, im B, |h(B_t)|) rows")

    worst = sub.add_parser("worst-ratios", help="page through the largest ratios of an NDJSON report")
    worst.add_argument("report", help="report written by another subcommand with --format json")
    worst.add_argument("--check", default=None, help="restrict to one check id")
    worst.add_argument("--page", type=int, default=0, help="page number, 0 holds the worst (default: %(default)s)")
    worst.add_argument("--page-size", type=int, default=25, help="records per page (default: %(default)s)")
    worst.add_argument("--log-level", default=settings.log_level,
                       help="logging level (default: HARDYLAB_LOG_LEVEL or %(default)s)")
    return parser


def resolve_scale(args, settings):
    """Fill unset Monte Carlo flags from the preset, then from settings."""
    preset = HARNESS_PRESETS[getattr(args, "preset", "desk")]
    paths_key = "harness_paths" if args.command == "simulate-paths" else "paths"
    if args.paths is None:
        args.paths = preset.get(paths_key, settings.paths)
    if args.dt is None:
        args.dt = preset.get("dt", settings.dt)
    if args.max_steps is None:
        args.max_steps = preset.get("max_steps", settings.max_steps)
    if hasattr(args, "bins") and args.bins is None:
        args.bins = preset.get("bins", DEFAULT_BINS)
    if hasattr(args, "harness_paths") and args.harness_paths is None:
        args.harness_paths = preset.get("harness_paths", args.paths)
    return args


def _brownian_config(args):
    return BrownianConfig(dt=args.dt, max_steps=args.max_steps, n_paths=args.paths, seed=args.seed,
                          threads=args.threads, estimator=args.estimator)


def _check_grid(args):
    _require(validate_grid_size(args.grid))
    _require(validate_degree(args.degree, args.grid))


def _harness_report(check, value, passed, seed, details):
    return InequalityReport(check=check, lhs=value, rhs=None, constant=None, ratio=None,
                            passed=bool(passed), degenerate=False, mode="monte-carlo",
                            seed=seed, details=details)


def _write(store, args, argv):
    if args.out is not None:
        _require(validate_output_path(args.out))
    store.write(meta={"threads": args.threads, "argv": list(argv)})


def _exit_code(reports):
    return EXIT_FAILED if any(report.failed for report in reports) else EXIT_OK


def cmd_verify_suite(args, argv):
    _check_grid(args)
    checks = [c.strip() for c in args.checks.split(",") if c.strip()]
    for check in checks:
        if check not in CHECKS:
            raise UsageError(f"Unknown check {check!r}; available: {', '.join(CHECKS)}")
    if "hardy_thin_thick" in checks:
        raise UsageError("hardy_thin_thick is a Monte Carlo check; use verify-brownian")
    reports = run_suite(args.n, args.grid, args.degree, args.seeds, args.seed, checks, threads=args.threads)
    if args.scalar_samples:
        reports.extend(scalar_suite(args.scalar_samples, args.seed, args.scalar_instances))
    if args.convexity_trials or args.sweep_points:
        reports.extend(convexity_suite(max(args.convexity_trials, 1), args.seed, sweep_points=args.sweep_points))
    store = ReportStore(args.out, args.format)
    store.extend(reports)
    _write(store, args, argv)
    return _exit_code(reports)


def cmd_verify_brownian(args, argv):
    _check_grid(args)
    cfg = _brownian_config(args)
    reports = run_suite(args.n, args.grid, args.degree, args.seeds, args.seed,
                        ("hardy_thin_thick",), mc=cfg, threads=1)
    harness_cfg = replace(cfg, n_paths=args.harness_paths)
    batch = sample_paths(harness_cfg)
    uniformity = exit_uniformity(batch, args.bins)
    times = exit_time_summary(batch)
    harness = [
        _harness_report("exit_uniformity", uniformity["p_value"], uniformity["p_value"] >= args.tol,
                        args.seed, uniformity),
        _harness_report("exit_time", times["mean"], times["within_3se"], args.seed, times),
    ]
    for report in harness:
        report.mc = harness_cfg.to_dict()
    reports.extend(harness)
    store = ReportStore(args.out, args.format)
    store.extend(reports)
    _write(store, args, argv)
    return _exit_code(reports)


def _decompose_input(args):
    if args.input is not None:
        _require(validate_input_path(args.input))
        try:
            return load_table(args.input)
        except (OSError, ValueError, KeyError) as e:
            raise UsageError(f"Cannot read martingale from {args.input}: {e}")
    _check_grid(args)
    if args.kind == "hardy":
        return random_hardy(args.n, args.grid, args.degree, seed=args.seed)
    return random_martingale(args.n, args.grid, seed=args.seed)


def cmd_decompose(args, argv):
    F = _decompose_input(args)
    if args.kind == "hardy":
        decomposition = hardy_thin_thick(F, _brownian_config(args))
    else:
        decomposition = davis_garsia_decompose(F)
    if args.out is None:
        json.dump(decomposition.to_dict(), sys.stdout, sort_keys=True)
        sys.stdout.write("\n")
    else:
        _require(validate_output_path(args.out))
        try:
            decomposition.save(args.out, "csv" if args.format == "csv" else "npz")
        except OSError as e:
            raise ReportStoreError(f"Failed to write decomposition {args.out}: {e}")
    return EXIT_OK if decomposition.passed else EXIT_FAILED


def cmd_estimate_alpha(args, argv):
    _require(validate_grid_size(args.grid))
    estimate = estimate_alpha(args.generator, args.trials, args.tol, args.seed, args.grid, args.degree)
    passed = estimate.alpha >= ALPHA0 - args.tol
    store = ReportStore(args.out, args.format)
    store.add(InequalityReport(check="estimate_alpha", lhs=estimate.alpha, rhs=ALPHA0, constant=None,
                               ratio=None, passed=passed, degenerate=False, seed=args.seed,
                               N=args.grid, degree=args.degree, details=estimate.to_dict()))
    _write(store, args, argv)
    return EXIT_OK if passed else EXIT_FAILED


def dump_paths(path, traces, h):
    """Write (path, t, re B, im B, |h(B_t)|) rows."""
    coeffs = dft(h)
    try:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(("path", "t", "re", "im", "abs_h"))
            for index, trace in enumerate(traces):
                for row in trace.to_rows(lambda points: eval_disk(coeffs, points)):
                    writer.writerow((index,) + tuple(repr(value) for value in row))
    except OSError as e:
        raise ReportStoreError(f"Failed to write path dump {path}: {e}")


def cmd_simulate_paths(args, argv):
    _check_grid(args)
    cfg = _brownian_config(args)
    batch = sample_paths(cfg)
    uniformity = exit_uniformity(batch, args.bins)
    times = exit_time_summary(batch)
    reports = [
        _harness_report("exit_uniformity", uniformity["p_value"], uniformity["p_value"] >= args.tol,
                        args.seed, uniformity),
        _harness_report("exit_time", times["mean"], times["within_3se"], args.seed, times),
    ]
    for report in reports:
        report.mc = cfg.to_dict()
    if args.dump_paths is not None:
        _require(validate_output_path(args.dump_paths))
        rng = np.random.Generator(np.random.Philox(key=args.seed))
        h = random_analytic(rng, args.grid, args.degree)
        dump_paths(args.dump_paths, trace_paths(args.seed, args.dt, args.max_steps, args.count, cfg.block_size), h)
    store = ReportStore(args.out, args.format)
    store.extend(reports)
    _write(store, args, argv)
    return _exit_code(reports)


def cmd_worst_ratios(args, argv):
    _require(validate_input_path(args.report))
    if args.page_size < 1:
        raise UsageError(f"--page-size must be positive, got {args.page_size}")
    records, _ = load_reports(args.report)
    store = ReportStore()
    store.extend(records)
    json.dump(store.worst_ratios(args.check, args.page, args.page_size), sys.stdout, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


COMMANDS = {
    "verify-suite": cmd_verify_suite,
    "verify-brownian": cmd_verify_brownian,
    "decompose": cmd_decompose,
    "estimate-alpha": cmd_estimate_alpha,
    "simulate-paths": cmd_simulate_paths,
    "worst-ratios": cmd_worst_ratios,
}


def run(argv=None):
    """
    Parse argv, run one subcommand and return its exit code.

    Returns:
        int: 0 all asserted checks passed, 1 a check failed, 2 usage error
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        settings = Settings()
    except ValueError as e:
        print(f"hardylab: {e}", file=sys.stderr)
        return EXIT_USAGE
    parser = build_parser(settings)
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:
        # --help
        return e.code if isinstance(e.code, int) else EXIT_OK

    try:
        logging.basicConfig(stream=sys.stderr, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
        logging.getLogger().setLevel(str(args.log_level).upper())
        if hasattr(args, "paths"):
            resolve_scale(args, settings)
        return COMMANDS[args.command](args, argv)
    except (UsageError, MemoryGuardError, MartingaleShapeError, NotHardyError, UnknownCheckError,
            ReportStoreError) as e:
        print(f"hardylab: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ExitBudgetError as e:
        print(f"hardylab: {e}; raise --max-steps or --dt", file=sys.stderr)
        return EXIT_FAILED
    except ValueError as e:
        print(f"hardylab: invalid parameter: {e}", file=sys.stderr)
        return EXIT_USAGE
