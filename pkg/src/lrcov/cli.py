"""Command-line interface.

Every option may also be given in a JSON file passed with ``--config``; keys
are the long option names with dashes replaced by underscores. Flags given on
the command line win over the file.

Exit codes: 0 success, 2 usage error, 3 input or parse error, 4 numerical
failure, 5 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .errors import InputError, IoError, LrcovError, NumericalError
from .estimator import debiased_sigma, threshold_pd
from .io import emit_report, ingest_csv
from .kernels import DEFAULT_KERNEL, KERNEL_NAMES
from .longmemory import LongMemoryConfig, longmemory_test
from .rng import THREADS_ENV
from .simulate import SCENARIOS, ScenarioSpec, estimate_d_slope, monte_carlo
from .structural import StructuralConfig, structural_test
from .tuning import CRITERIA, TuningGrid, default_m_tau, grid_default, mv_select

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4, 5

log = logging.getLogger("lrcov")


class UsageError(Exception):
    pass


# ------------------------------------------------------------- value parsers


def parse_levels(text) -> tuple:
    if isinstance(text, (list, tuple)):
        vals = [float(v) for v in text]
    else:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    if not vals or not all(0 < v < 1 for v in vals):
        raise UsageError(f"levels must lie in (0, 1): {text!r}")
    return tuple(vals)


def parse_range(text, integer: bool = False) -> list:
    """'a:b' or 'a:b:step' (inclusive), a comma list, or a single value."""
    if isinstance(text, (list, tuple)):
        vals = list(text)
    elif ":" in str(text):
        parts = [float(v) for v in str(text).split(":")]
        if len(parts) == 2:
            parts.append(1.0)
        if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
            raise UsageError(f"bad range {text!r}; expected lo:hi[:step]")
        lo, hi, step = parts
        count = int(np.floor((hi - lo) / step + 1e-9)) + 1
        vals = [round(lo + k * step, 12) for k in range(count)]
    else:
        vals = [float(v) for v in str(text).split(",") if v.strip()]
    if not vals:
        raise UsageError(f"empty range {text!r}")
    if integer:
        if any(float(v) != int(v) for v in vals):
            raise UsageError(f"range {text!r} must contain integers")
        return [int(v) for v in vals]
    return [float(v) for v in vals]


# ------------------------------------------------------------------- parser


def _add(p, *flags, **kw):
    kw.setdefault("default", argparse.SUPPRESS)
    p.add_argument(*flags, **kw)


def _common(p, stochastic: bool = True, data: bool = True):
    if data:
        _add(p, "--input", help="CSV file: header row, y first, then covariates")
    _add(p, "--config", help="JSON file of option values; flags win")
    _add(p, "--output", help="output path (default: stdout)")
    _add(p, "--format", choices=("json", "csv"), help="output format (default json)")
    _add(p, "--kernel", choices=KERNEL_NAMES, help=f"kernel family (default {DEFAULT_KERNEL})")
    _add(p, "--threads", type=int, help=f"worker processes (fallback: ${THREADS_ENV})")
    if stochastic:
        _add(p, "--seed", type=int, help="random seed (required)")


def _tuning_flags(p):
    _add(p, "--m", type=int, help="difference window")
    _add(p, "--tau", type=float, help="smoothing bandwidth")
    _add(p, "--auto-tune", action="store_true", dest="auto_tune",
         help="select (m, tau) by minimum volatility")
    _add(p, "--B-mv", type=int, dest="B_mv", help="bootstrap draws per tuning cell (default 100)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrcov",
        description="Difference-based long-run covariance estimation and bootstrap tests "
                    "for time-varying regressions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("estimate", help="estimate the long-run covariance curve")
    _common(p, stochastic=False)
    _add(p, "--m", type=int, help="difference window")
    _add(p, "--tau", type=float, help="smoothing bandwidth")
    _add(p, "--pd-threshold", action="store_true", dest="pd_threshold",
         help="floor eigenvalues at 1/n")

    p = sub.add_parser("test-structural", help="test for constant coefficients")
    _common(p)
    _tuning_flags(p)
    _add(p, "--B", type=int, help="bootstrap replications (default 1000)")
    _add(p, "--levels", help="comma-separated nominal levels (default 0.05,0.10)")

    p = sub.add_parser("test-longmemory", help="KPSS/R-S/V-S/K-S tests for long memory")
    _common(p)
    _tuning_flags(p)
    _add(p, "--B", type=int, help="bootstrap replications (default 1000)")
    _add(p, "--b", type=float, help="local-linear bandwidth")
    _add(p, "--gcv", action="store_true", help="choose b by generalized cross-validation")
    _add(p, "--eta", type=float, help="bandwidth of the bootstrap design estimate")
    _add(p, "--levels", help="comma-separated nominal levels (default 0.05,0.10)")

    p = sub.add_parser("select-tuning", help="minimum-volatility choice of (m, tau)")
    _common(p)
    _add(p, "--criterion", choices=CRITERIA, help="statistic whose variance is tracked")
    _add(p, "--m-grid", dest="m_grid", help="m values, a:b or comma list")
    _add(p, "--tau-grid", dest="tau_grid", help="tau values, lo:hi:step or comma list")
    _add(p, "--B-mv", type=int, dest="B_mv", help="bootstrap draws per cell (default 100)")
    _add(p, "--b", type=float, help="local-linear bandwidth (long-memory criteria)")

    p = sub.add_parser("simulate", help="Monte Carlo rejection rates")
    _common(p, data=False)
    _add(p, "--scenario", choices=SCENARIOS, help="data-generating model")
    _add(p, "--base", choices=SCENARIOS[:-1], help="base model of a custom scenario")
    _add(p, "--innovations", help="innovation law: normal or tK (Student t, K dof)")
    _add(p, "--n", type=int, help="sample size")
    _add(p, "--delta", help="break sizes (CP) or memory parameters, lo:hi:step or list")
    _add(p, "--reps", type=int, help="replications per cell")
    _add(p, "--test", choices=("structural", "longmemory"), help="test to run")
    _add(p, "--B", type=int, help="bootstrap replications per test (default 1000)")
    _tuning_flags(p)
    _add(p, "--b", type=float, help="local-linear bandwidth (long-memory test)")
    _add(p, "--levels", help="comma-separated nominal levels (default 0.05,0.10)")
    _add(p, "--csv", help="also write the tidy rate table to this path")

    p = sub.add_parser("estimate-d", help="log-log slope estimate of the memory parameter")
    _common(p, stochastic=False)
    _add(p, "--m-grid", dest="m_grid", help="m values (default 8,12,16,24,32)")
    _add(p, "--tau", type=float, help="smoothing bandwidth")
    return parser


# ------------------------------------------------------------------ helpers


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path}: expected a JSON object")
    return {str(k).replace("-", "_"): v for k, v in cfg.items()}


def merged_options(args: argparse.Namespace, parser: argparse.ArgumentParser) -> dict:
    opts = vars(args).copy()
    if "config" in opts:
        cfg = load_config(opts.pop("config"))
        sub = parser._subparsers._group_actions[0].choices[opts["command"]]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        opts = {**cfg, **opts}
    return opts


def _require(opts, *names):
    missing = [n for n in names if opts.get(n) is None]
    if missing:
        raise UsageError("missing required option(s): "
                         + ", ".join("--" + n.replace("_", "-") for n in missing))


def _tuning_choice(opts) -> dict:
    """Exactly one of explicit (m, tau) or auto-tuning."""
    auto = bool(opts.get("auto_tune", False))
    has_m, has_tau = opts.get("m") is not None, opts.get("tau") is not None
    if auto and (has_m or has_tau):
        raise UsageError("give either --m/--tau or --auto-tune, not both")
    if not auto and not (has_m and has_tau):
        raise UsageError("give both --m and --tau, or --auto-tune")
    out = {"auto_tune": auto, "B_mv": int(opts.get("B_mv", 100))}
    if not auto:
        out.update(m=int(opts["m"]), tau=float(opts["tau"]))
    return out


def _emit(obj, opts):
    emit_report(obj, opts.get("format", "json"), opts.get("output"))


# --------------------------------------------------------------- subcommands


def cmd_estimate(opts):
    _require(opts, "input")
    data = ingest_csv(opts["input"])
    dm, dt = default_m_tau(data.n)
    m = int(opts.get("m", dm))
    tau = float(opts.get("tau", dt))
    curve = debiased_sigma(data, m, tau, opts.get("kernel", DEFAULT_KERNEL))
    if opts.get("pd_threshold", False):
        curve = threshold_pd(curve, data.n)
    _emit(curve, opts)


def cmd_test_structural(opts):
    _require(opts, "input", "seed")
    data = ingest_csv(opts["input"])
    config = StructuralConfig(kernel=opts.get("kernel", DEFAULT_KERNEL),
                              B=int(opts.get("B", 1000)), seed=int(opts["seed"]),
                              levels=parse_levels(opts.get("levels", "0.05,0.10")),
                              **_tuning_choice(opts))
    _emit(structural_test(data, config), opts)


def _bandwidth_choice(opts):
    if opts.get("gcv", False) and opts.get("b") is not None:
        raise UsageError("give either --b or --gcv, not both")
    return None if opts.get("b") is None else float(opts["b"])


def cmd_test_longmemory(opts):
    _require(opts, "input", "seed")
    data = ingest_csv(opts["input"])
    config = LongMemoryConfig(b=_bandwidth_choice(opts), eta=opts.get("eta"),
                              kernel=opts.get("kernel", DEFAULT_KERNEL),
                              B=int(opts.get("B", 1000)), seed=int(opts["seed"]),
                              levels=parse_levels(opts.get("levels", "0.05,0.10")),
                              **_tuning_choice(opts))
    _emit(longmemory_test(data, config), opts)


def cmd_select_tuning(opts):
    _require(opts, "input", "seed", "criterion")
    data = ingest_csv(opts["input"])
    default = grid_default(data.n)
    m_values = parse_range(opts["m_grid"], integer=True) if "m_grid" in opts else default.m_values
    taus = parse_range(opts["tau_grid"]) if "tau_grid" in opts else default.tau_values
    grid = TuningGrid(tuple(m_values), tuple(taus))
    sel = mv_select(data, grid, opts["criterion"], B_mv=int(opts.get("B_mv", 100)),
                    seed=int(opts["seed"]), kernel=opts.get("kernel", DEFAULT_KERNEL),
                    b=opts.get("b"))
    _emit(sel, opts)


def cmd_simulate(opts):
    _require(opts, "scenario", "n", "reps", "test", "seed")
    values = parse_range(opts.get("delta", "0"))
    specs = [ScenarioSpec(opts["scenario"], int(opts["n"]), v, base=opts.get("base"),
                          innovations=opts.get("innovations", "normal")) for v in values]
    test_config = {"kernel": opts.get("kernel", DEFAULT_KERNEL), "B": int(opts.get("B", 1000)),
                   **_tuning_choice(opts)}
    if opts["test"] == "longmemory" and opts.get("b") is not None:
        test_config["b"] = float(opts["b"])
    levels = parse_levels(opts.get("levels", "0.05,0.10"))
    report = monte_carlo(specs, opts["test"], int(opts["reps"]), base_seed=int(opts["seed"]),
                         test_config=test_config, levels=levels)
    _emit(report, opts)
    if opts.get("csv"):
        emit_report(report, "csv", opts["csv"])


def cmd_estimate_d(opts):
    _require(opts, "input")
    data = ingest_csv(opts["input"])
    m_grid = parse_range(opts.get("m_grid", "8,12,16,24,32"), integer=True)
    tau = float(opts.get("tau", default_m_tau(data.n)[1]))
    result = estimate_d_slope(data, m_grid, tau, opts.get("kernel", DEFAULT_KERNEL))
    result["tau"] = tau
    _emit(result, opts)


COMMANDS = {
    "estimate": cmd_estimate,
    "test-structural": cmd_test_structural,
    "test-longmemory": cmd_test_longmemory,
    "select-tuning": cmd_select_tuning,
    "simulate": cmd_simulate,
    "estimate-d": cmd_estimate_d,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = merged_options(args, parser)
        if opts.get("threads") is not None:
            if int(opts["threads"]) < 1:
                raise UsageError("--threads must be at least 1")
            os.environ[THREADS_ENV] = str(int(opts["threads"]))
        COMMANDS[opts["command"]](opts)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"lrcov: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IoError as exc:
        print(f"lrcov: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InputError as exc:
        print(f"lrcov: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"lrcov: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except LrcovError as exc:
        print(f"lrcov: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
