"""Command-line front end.

Exit codes: 0 converged (or the command succeeded), 2 not converged,
3 input error (missing or malformed files, bad flags, unknown names).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .bench import (
    ExperimentSpec,
    PerturbSpec,
    cell_label,
    emit_trace_csv,
    format_table,
    perturbed_start,
    run_comparison,
    run_limit_test,
    write_outputs,
)
from .caseio import load_case, resolve_case_path
from .errors import CaseError, CycleDetected, SicnmError
from .pfcore import build_problem, initial_state
from .solvers import CONVERGED, METHODS, default_options, enforce_q_limits, solve
from .tableau import TABLEAUX, check_order_conditions, get_tableau, stability_function

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_INPUT = 3

RESIDUAL_LIMIT = 1e-12
STIFF_LIMIT = 1e-5


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--case", required=True, metavar="PATH",
                   help="MATPOWER .m or JSON case file, or the name of a bundled case (e.g. case9)")
    p.add_argument("--tol", type=float, help="mismatch infinity-norm target in p.u. (default 1e-5)")
    p.add_argument("--max-iter", type=int, help="iteration / accepted-step limit (default 1000)")
    p.add_argument("--h0", type=float,
                   help="initial step size (default 0.1; 0.01 for m7-*, 1.0 for m3)")
    p.add_argument("--atol", type=float, help="absolute tolerance of the m8 step control (default 0.1)")
    p.add_argument("--rtol", type=float, help="relative tolerance of the m8 step control (default 0.1)")
    p.add_argument("--enforce-q-limits", action="store_true",
                   help="convert PV buses whose generators violate Q limits to PQ and re-solve")
    p.add_argument("--start", choices=("flat", "case"), default="flat",
                   help="initial point: flat start or the voltages stored in the case (default flat)")
    p.add_argument("--seed", type=int,
                   help="perturb half of the start angles by clipped normal noise in "
                        "[-0.005, 0.005] rad drawn with this seed")
    p.add_argument("-v", "--verbose", action="store_true", help="print the iteration trace to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sicnm", description="AC power flow with continuous Newton methods.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="solve one case with one method",
                         description="Solve one case with one method. Exit 0 if converged, 2 otherwise.")
    _solver_flags(run)
    run.add_argument("--method", default="m8-rodas3d", choices=list(METHODS),
                     help="method id (default m8-rodas3d)")
    run.add_argument("--report", metavar="PATH", help="write the solve report as JSON")
    run.add_argument("--trace", metavar="PATH",
                     help="write the iteration trace as CSV (plus a .json series next to it)")

    cmp_ = sub.add_parser("compare", help="solve one case with several methods",
                          description="Solve one case with several methods and print a comparison "
                                      "table. D. = divergent, NC. = not convergent within the limit. "
                                      "Exit 0 if every method converged, 2 otherwise.")
    _solver_flags(cmp_)
    cmp_.add_argument("--method", action="append", choices=list(METHODS),
                      help="method id; repeat for several (default: all methods)")
    cmp_.add_argument("--report", metavar="PATH", help="write the comparison as JSON")
    cmp_.add_argument("--trace", metavar="DIR",
                      help="directory for one trace CSV/JSON pair per method")

    bench = sub.add_parser("bench", help="run an experiment spec",
                           description="Run the comparison matrix of an experiment spec and, if it "
                                       "has a 'perturb' section, the randomized limit test.")
    bench.add_argument("--spec", required=True, metavar="PATH", help="experiment spec JSON file")
    bench.add_argument("--seed", type=int, help="override the experiment file's master seed")
    bench.add_argument("--report", metavar="PATH", help="write the bench report as JSON")
    bench.add_argument("--trace", metavar="DIR",
                       help="output directory for report.json, summary.txt/.csv and traces/")

    val = sub.add_parser("validate-tableau", help="check a Rosenbrock tableau",
                         description="Print order-condition residuals and sampled |R(z)|. Exit 0 iff "
                                     f"all residuals <= {RESIDUAL_LIMIT:g} and |R(-1e8)| <= {STIFF_LIMIT:g}.")
    val.add_argument("name", help=f"tableau name ({', '.join(TABLEAUX)})")
    return parser


def _write_json(path: str, doc: Any) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(doc, indent=1, allow_nan=False) + "\n", encoding="utf-8")


def _load(args):
    try:
        path = resolve_case_path(args.case)
        case = load_case(path)
    except FileNotFoundError:
        raise InputError(f"{args.case}: no such case file") from None
    except OSError as exc:
        raise InputError(f"{args.case}: {exc}") from None
    except CaseError as exc:
        raise InputError(f"{path}: {exc}") from None
    try:
        prob = build_problem(case)
    except SicnmError as exc:
        raise InputError(f"{path}: {exc}") from None
    return path, case, prob


def _start(args, case, prob) -> np.ndarray:
    base = "case_values" if args.start == "case" else "flat"
    if args.seed is None:
        return initial_state(prob, case, base)
    return perturbed_start(prob, case, PerturbSpec(runs=1), args.seed, 0, base)


def _options(args, method: str):
    try:
        return default_options(method, tol=args.tol, max_iter=args.max_iter, h0=args.h0,
                               atol=args.atol, rtol=args.rtol)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _solve(args, method, case, prob, y0):
    opts = _options(args, method)
    if not args.enforce_q_limits:
        return solve(prob, y0, method, opts)
    try:
        rep = enforce_q_limits(lambda p, y, o: solve(p, y, method, o), case, opts, y0)
    except CycleDetected as exc:
        rep = exc.report
        rep.message = f"q-limit cycle: {exc}"
    rep.method = method
    return rep


def _print_trace(rep) -> None:
    for r in rep.trace:
        print(f"{r.iter:5d}  {r.err_inf:.6e}  h={r.h:.4e}  {'acc' if r.accepted else 'rej'}",
              file=sys.stderr)


def cmd_run(args) -> int:
    path, case, prob = _load(args)
    rep = _solve(args, args.method, case, prob, _start(args, case, prob))
    if args.verbose:
        _print_trace(rep)
    print(f"{args.method}: {rep.status} after {rep.iterations} iterations, "
          f"|g|inf = {rep.final_error:.3e}, {rep.wall_time:.3f} s")
    if rep.converted_buses:
        print(f"converted to PQ: {' '.join(map(str, rep.converted_buses))}")
    if args.report:
        _write_json(args.report, {"schema": 1, "case": str(path), **rep.to_dict()})
    if args.trace:
        emit_trace_csv(rep, args.trace)
    return EXIT_OK if rep.status == CONVERGED else EXIT_NOT_CONVERGED


COMPARE_COLUMNS = ["method", "result", "status", "iterations", "g_evals", "j_evals", "hz_evals",
                   "lu_facts", "rejected"]


def cmd_compare(args) -> int:
    path, case, prob = _load(args)
    methods = args.method or list(METHODS)
    y0 = _start(args, case, prob)
    rows, docs = [COMPARE_COLUMNS], []
    all_ok = True
    for m in methods:
        rep = _solve(args, m, case, prob, y0)
        all_ok &= rep.status == CONVERGED
        c = rep.counters
        label = cell_label(rep.status, rep.iterations, rep.wall_time)
        rows.append([m, label, rep.status, str(rep.iterations), str(c.g_evals), str(c.j_evals),
                     str(c.hz_evals), str(c.lu_facts), str(c.rejected_steps)])
        docs.append({"cell": label, **rep.to_dict(include_state=False)})
        if args.trace:
            emit_trace_csv(rep, Path(args.trace) / f"{Path(path).stem}__{m}.csv")
    print(format_table(rows))
    if args.report:
        _write_json(args.report, {"schema": 1, "case": str(path), "rows": docs})
    return EXIT_OK if all_ok else EXIT_NOT_CONVERGED


def cmd_bench(args) -> int:
    try:
        spec = ExperimentSpec.load(args.spec)
    except OSError as exc:
        raise InputError(f"{args.spec}: {exc}") from None
    except (ValueError, TypeError) as exc:
        raise InputError(f"{args.spec}: {exc}") from None
    if args.seed is not None:
        spec = ExperimentSpec(spec.cases, spec.methods, spec.opts, args.seed, spec.perturb)
    report = run_comparison(spec)
    if spec.perturb is not None:
        report.limit = run_limit_test(spec).limit
    print(report.summary_text())
    if args.report:
        _write_json(args.report, report.to_dict())
    if args.trace:
        write_outputs(report, args.trace)
    return EXIT_OK


def cmd_validate_tableau(args) -> int:
    try:
        tab = get_tableau(args.name)
    except KeyError:
        raise InputError(f"unknown tableau {args.name!r}; known: {', '.join(TABLEAUX)}") from None
    ok = True
    print(f"tableau {tab.name}: s={tab.s} order={tab.order} embedded={tab.embedded_order} "
          f"gamma={tab.gamma!r}")
    for name, res in check_order_conditions(tab).items():
        good = abs(res) <= RESIDUAL_LIMIT
        ok &= good
        print(f"  {'ok  ' if good else 'FAIL'} {name:<36s} {res: .3e}")
    for z in (-1e8, 1e8, -1e4, -10.0, -1.0, 1j * 1e8):
        r = abs(stability_function(tab, z))
        tag = ""
        if z == -1e8:
            good = r <= STIFF_LIMIT
            ok &= good
            tag = "ok" if good else "FAIL"
        print(f"  |R({z})| = {r:.3e} {tag}".rstrip())
    return EXIT_OK if ok else 1


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "bench": cmd_bench,
            "validate-tableau": cmd_validate_tableau}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"sicnm: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
