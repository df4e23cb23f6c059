"""Command-line entry point.

Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 failed check.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import time
from contextlib import contextmanager
from importlib import resources
from pathlib import Path

import numpy as np

from . import _parallel
from .approx import QuadratureError, WitsenhausenConfig, WitsenhausenInstance, affine_benchmark, run_pipeline
from .classical import ProfileCapExceeded, enumerate_optimal
from .counterexamples import (
    PomdpCounterexample,
    pomdp_classical_value,
    pomdp_widesense_sim,
    verify_ci_failure,
    verify_lc_failure,
)
from .linprog import LpNumericError
from .model import TeamParseError, TeamValidationError, load_team
from .relax import ClassSolveError, HierarchyViolation, NonProductPriorError, centralized_bound, m_value, ns_value

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4
CSV_HEADER = "# teamcorr-v1"


class CheckFailed(Exception):
    pass


class Output:
    """Routes the human report and the CSV rows according to ``--out`` and ``--quiet``."""

    def __init__(self, args, columns):
        self.args = args
        self.columns = columns
        self.rows = []
        # With CSV on stdout the report moves to stderr so the CSV stays clean.
        self.text_stream = sys.stderr if args.out == "-" else sys.stdout

    def say(self, line: str = "") -> None:
        if not self.args.quiet:
            print(line, file=self.text_stream)

    def row(self, *values) -> None:
        self.rows.append(values)

    def timing(self, seconds: float) -> str:
        return "" if self.args.no_timing else f"{seconds:.6f}"

    def flush(self) -> None:
        if self.args.out is None:
            return
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        if self.args.out == "-":
            sys.stdout.write(buf.getvalue())
        else:
            Path(self.args.out).write_text(buf.getvalue())


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


@contextmanager
def _stopwatch():
    box = [time.perf_counter()]
    yield box
    box[0] = time.perf_counter() - box[0]


def _resolve_problem(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    bundled = resources.files("teamcorr") / "problems" / path.name
    if bundled.is_file():
        return Path(str(bundled))
    return path  # load_team reports the missing file


# -- commands ------------------------------------------------------------------

def cmd_solve(args) -> int:
    out = Output(args, ["problem", "class", "value", "wall_time"])
    team = load_team(_resolve_problem(args.problem))
    with _stopwatch() as sw:
        if args.cls == "classical":
            value, profile = enumerate_optimal(team)
        elif args.cls == "ns":
            value, profile = ns_value(team), None
        elif args.cls == "m":
            value, profile = m_value(team), None
        else:
            value, profile = centralized_bound(team), None
    out.say(f"{args.cls} value: {value:.12g}")
    if profile is not None:
        for i, m in enumerate(profile.maps):
            out.say(f"  gamma^{i + 1} = {[int(v) for v in m]}")
    out.row(Path(args.problem).name, args.cls, value, out.timing(sw[0]))
    out.flush()
    return EXIT_OK


def cmd_hierarchy(args) -> int:
    from .relax import hierarchy_report

    out = Output(args, ["problem", "class", "value", "wall_time"])
    team = load_team(_resolve_problem(args.problem))
    with _stopwatch() as sw:
        try:
            table = hierarchy_report(team, include_quantum_xor=args.xor)
            violation = None
        except HierarchyViolation as exc:
            table, violation = exc.table, exc
    out.say(f"{'class':<10} value  ({team.sense})")
    for cls, value in table:
        out.say(f"{cls:<10} {value:.12g}")
        out.row(Path(args.problem).name, cls, value, out.timing(sw[0]))
    out.flush()
    if violation is not None:
        raise CheckFailed(str(violation))
    out.say("chain holds")
    return EXIT_OK


def cmd_witsenhausen(args) -> int:
    out = Output(args, ["k", "sigma", "levels", "finite_value", "continuous_value", "quad_bound",
                        "affine_value", "wall_time"])
    if not (args.k > 0 and args.sigma > 0):
        raise ValueError("--k and --sigma must be positive")
    if args.levels < 1:
        raise ValueError("--levels must be at least 1")
    config = WitsenhausenConfig(args.k, args.sigma, args.levels, args.m_factor, args.quad_panels, args.seed)
    lam, affine = affine_benchmark(WitsenhausenInstance(args.k, args.sigma))
    out.say(f"affine benchmark: lambda* = {lam:.10f}, value = {affine:.10g}")
    start = time.perf_counter()
    results = run_pipeline(config)
    elapsed = time.perf_counter() - start
    out.say(f"{'levels':>6} {'finite':>14} {'continuous':>14} {'quad bound':>11}")
    for r in results:
        out.say(f"{r.levels:>6} {r.finite_value:>14.8g} {r.continuous_value:>14.8g} {r.quad_bound:>11.2e}")
        out.row(args.k, args.sigma, r.levels, r.finite_value, r.continuous_value, r.quad_bound, affine,
                out.timing(elapsed))
    final = results[-1].continuous_value
    relation = "below" if final < affine else "not below"
    out.say(f"continuous value {final:.8g} is {relation} the affine benchmark {affine:.8g}")
    out.flush()
    return EXIT_OK


def _squarewave(args, out: Output) -> list[str]:
    top = args.n if args.n is not None else 1024
    if top < 1:
        raise ValueError("--n must be positive")
    if top & (top - 1) == 0 and top >= 16:
        n_list = [2**p for p in range(4, top.bit_length())]
    else:
        n_list = [top]
    report = verify_ci_failure(n_list)
    out.say(report.to_text())
    for n, d in report.deviations:
        out.row("squarewave", n, float(d))
    failures = []
    if not report.bounds_ok:
        failures.append("setwise deviation bound 1/(2n) violated")
    if max(r for _, r in report.ci_residuals) != 0.0:
        failures.append("a P_n fails conditional independence on its partition")
    if not report.ci_fails_in_limit:
        failures.append("limit unexpectedly conditionally independent")
    return failures


def _lc(args, out: Output) -> list[str]:
    n = args.n if args.n is not None else 64
    report = verify_lc_failure(n)
    out.say(report.to_text())
    for m, d in report.convergence:
        out.row("lc", m, float(d))
    return [] if report.excluded else ["L_C exclusion not certified: the mixture LP is feasible"]


def _pomdp(args, out: Output) -> list[str]:
    T = args.horizon if args.horizon is not None else 10_000
    ce = PomdpCounterexample.frozen(np.array([[0.5, 0.0], [0.0, 0.5]]), horizon=T)
    classical, pattern = pomdp_classical_value(ce)
    wide = pomdp_widesense_sim(ce, T, seed=args.seed)
    out.say(f"wide-sense vs classical: {wide!r} vs {classical!r} ({pattern} sequence)")
    out.row("pomdp", T, wide, classical)
    failures = []
    if wide != 1.0:
        failures.append(f"wide-sense average {wide!r} is not exactly 1")
    if classical != 0.5:
        failures.append(f"classical value {classical!r} is not 1/2")
    return failures


def cmd_counterexample(args) -> int:
    columns = ["which", "T", "widesense", "classical"] if args.which == "pomdp" else ["which", "n", "max_deviation"]
    out = Output(args, columns)
    runner = {"squarewave": _squarewave, "lc": _lc, "pomdp": _pomdp}[args.which]
    failures = runner(args, out)
    out.flush()
    if failures:
        raise CheckFailed("; ".join(failures))
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="CSV destination; '-' for stdout")
    common.add_argument("--quiet", action="store_true", help="suppress the human-readable report")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None, help="worker cap (default: TEAMCORR_THREADS or 1)")
    common.add_argument("--no-timing", action="store_true", help="leave the wall_time column empty")

    parser = argparse.ArgumentParser(prog="teamcorr", description="Finite team decision problems.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="optimal value for one correlation class")
    p.add_argument("--problem", required=True)
    p.add_argument("--class", dest="cls", choices=["classical", "ns", "m", "cj"], default="classical")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("hierarchy", parents=[common], help="values across the correlation hierarchy")
    p.add_argument("--problem", required=True)
    p.add_argument("--xor", action="store_true", help="include the quantum value for XOR-shaped teams")
    p.set_defaults(func=cmd_hierarchy)

    p = sub.add_parser("witsenhausen", parents=[common], help="quantized Witsenhausen approximation")
    p.add_argument("--k", type=float, default=0.2)
    p.add_argument("--sigma", type=float, default=5.0)
    p.add_argument("--levels", type=int, default=64)
    p.add_argument("--m-factor", type=float, default=4.0)
    p.add_argument("--quad-panels", type=int, default=2)
    p.set_defaults(func=cmd_witsenhausen)

    p = sub.add_parser("counterexample", parents=[common], help="run a counterexample check")
    p.add_argument("--which", required=True, choices=["squarewave", "lc", "pomdp"])
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.set_defaults(func=cmd_counterexample)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits with 2 on usage errors
        return int(exc.code or 0)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_INPUT
    _parallel.set_threads(args.threads)
    try:
        return args.func(args)
    except ClassSolveError as exc:
        invalid = isinstance(exc.__cause__, (TeamValidationError, NonProductPriorError, ValueError))
        print(f"{'error' if invalid else 'solver error'}: {exc}", file=sys.stderr)
        return EXIT_INPUT if invalid else EXIT_SOLVER
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (TeamParseError, TeamValidationError, NonProductPriorError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (LpNumericError, QuadratureError, ProfileCapExceeded, RuntimeError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    finally:
        _parallel.set_threads(None)


if __name__ == "__main__":
    sys.exit(main())
