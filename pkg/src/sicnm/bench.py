"""Experiment harness: method comparison matrix and randomized limit tests.

Every (case, method[, run]) cell is independent. Randomness is derived from
``(seed, run)`` only, so results do not depend on scheduling order or on the
number of worker threads (``SICNM_THREADS``).
"""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .caseio import NetworkCase, load_case, resolve_case_path
from .errors import CaseError, SicnmError
from .pfcore import PfProblem, build_problem, initial_state, split_state, state_from_voltages
from .solvers import METHODS, default_options, solve
from .solvers.common import CONVERGED, DIVERGED, MAX_ITER, SINGULAR, IterationTrace, SolveReport

ERROR = "error"


@dataclass(frozen=True)
class PerturbSpec:
    fraction_of_buses: float = 0.5
    angle_range_rad: tuple[float, float] = (-0.005, 0.005)
    runs: int = 100
    iter_cap: int = 40

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ValueError("perturb.runs must be >= 1")
        if not 0.0 < self.fraction_of_buses <= 1.0:
            raise ValueError("perturb.fraction_of_buses must lie in (0, 1]")
        lo, hi = self.angle_range_rad
        if not lo <= hi:
            raise ValueError("perturb.angle_range_rad must be [low, high] with low <= high")
        if self.iter_cap < 1:
            raise ValueError("perturb.iter_cap must be >= 1")


@dataclass(frozen=True)
class ExperimentSpec:
    cases: tuple[str, ...]
    methods: tuple[str, ...]
    opts: dict[str, dict[str, Any]] = field(default_factory=dict)
    seed: int = 0
    perturb: PerturbSpec | None = None

    def __post_init__(self) -> None:
        if not self.cases:
            raise ValueError("spec needs at least one case")
        if not self.methods:
            raise ValueError("spec needs at least one method")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown method ids {bad}; known: {sorted(METHODS)}")

    @classmethod
    def from_dict(cls, doc: dict[str, Any], base_dir: str | Path | None = None) -> ExperimentSpec:
        if not isinstance(doc, dict):
            raise ValueError("experiment spec must be a JSON object")
        unknown = set(doc) - {"cases", "methods", "opts", "seed", "perturb"}
        if unknown:
            raise ValueError(f"unknown spec fields {sorted(unknown)}")
        base = Path(base_dir) if base_dir is not None else None
        cases = []
        for c in doc.get("cases", []):
            p = Path(c)
            # relative paths are taken relative to the experiment file when that exists
            if base is not None and not p.is_absolute() and (base / p).exists():
                p = base / p
            cases.append(str(p))
        perturb = doc.get("perturb")
        if perturb is not None:
            perturb = dict(perturb)
            if "angle_range_rad" in perturb:
                perturb["angle_range_rad"] = tuple(float(x) for x in perturb["angle_range_rad"])
            perturb = PerturbSpec(**perturb)
        return cls(
            cases=tuple(cases),
            methods=tuple(doc.get("methods", [])),
            opts={k: dict(v) for k, v in doc.get("opts", {}).items()},
            seed=int(doc.get("seed", 0)),
            perturb=perturb,
        )

    @classmethod
    def load(cls, path: str | Path) -> ExperimentSpec:
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), path.parent)


@dataclass
class CellResult:
    case: str
    method: str
    status: str
    iterations: int
    wall_time: float
    counters: dict[str, int]
    final_error: float | None = None
    message: str = ""
    trace: IterationTrace | None = field(default=None, repr=False)

    def to_dict(self, include_wall_time: bool = True) -> dict[str, Any]:
        out = {
            "case": self.case,
            "method": self.method,
            "status": self.status,
            "iterations": self.iterations,
            "counters": dict(self.counters),
            "final_error": self.final_error,
            "message": self.message,
        }
        if include_wall_time:
            out["wall_time"] = self.wall_time
        return out


@dataclass
class RunRecord:
    run: int
    status: str
    iterations: int
    wall_time: float


@dataclass
class LimitSummary:
    case: str
    method: str
    runs: list[RunRecord]

    @property
    def converged_runs(self) -> list[RunRecord]:
        return [r for r in self.runs if r.status == CONVERGED]

    @property
    def convergence_rate(self) -> float:
        return len(self.converged_runs) / len(self.runs) if self.runs else 0.0

    @property
    def mean_iterations(self) -> float | None:
        ok = self.converged_runs
        return float(np.mean([r.iterations for r in ok])) if ok else None

    @property
    def mean_time(self) -> float | None:
        ok = self.converged_runs
        return float(np.mean([r.wall_time for r in ok])) if ok else None

    def to_dict(self, include_wall_time: bool = True) -> dict[str, Any]:
        runs = []
        for r in self.runs:
            d = asdict(r)
            if not include_wall_time:
                del d["wall_time"]
            runs.append(d)
        out = {
            "case": self.case,
            "method": self.method,
            "convergence_rate": self.convergence_rate,
            "mean_iterations": self.mean_iterations,
            "runs": runs,
        }
        if include_wall_time:
            out["mean_time"] = self.mean_time
        return out


@dataclass
class BenchReport:
    seed: int
    cells: list[CellResult] = field(default_factory=list)
    limit: list[LimitSummary] = field(default_factory=list)

    def cell(self, case: str, method: str) -> CellResult:
        for c in self.cells:
            if c.case == case and c.method == method:
                return c
        raise KeyError((case, method))

    def limit_summary(self, case: str, method: str) -> LimitSummary:
        for s in self.limit:
            if s.case == case and s.method == method:
                return s
        raise KeyError((case, method))

    def to_dict(self, include_wall_time: bool = True) -> dict[str, Any]:
        return {
            "schema": 1,
            "seed": self.seed,
            "cells": [c.to_dict(include_wall_time) for c in self.cells],
            "limit": [s.to_dict(include_wall_time) for s in self.limit],
        }

    def summary_rows(self) -> list[list[str]]:
        rows = [["case", "method", "result", "g_evals", "j_evals", "lu_facts", "rejected"]]
        for c in self.cells:
            rows.append([
                c.case, c.method, cell_label(c.status, c.iterations, c.wall_time),
                str(c.counters.get("g_evals", "")), str(c.counters.get("j_evals", "")),
                str(c.counters.get("lu_facts", "")), str(c.counters.get("rejected_steps", "")),
            ])
        return rows

    def limit_rows(self) -> list[list[str]]:
        rows = [["case", "method", "runs", "rate", "mean_iterations", "mean_time"]]
        for s in self.limit:
            mi, mt = s.mean_iterations, s.mean_time
            rows.append([
                s.case, s.method, str(len(s.runs)), f"{s.convergence_rate:.3f}",
                "-" if mi is None else f"{mi:.2f}", "-" if mt is None else f"{mt:.4f}",
            ])
        return rows

    def summary_text(self) -> str:
        parts = []
        if self.cells:
            parts.append(format_table(self.summary_rows()))
        if self.limit:
            parts.append(format_table(self.limit_rows()))
        return "\n\n".join(parts)

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.cells:
            w.writerows(self.summary_rows())
        if self.limit:
            if self.cells:
                w.writerow([])
            w.writerows(self.limit_rows())
        return buf.getvalue()


def cell_label(status: str, iterations: int, wall_time: float) -> str:
    """``D.`` for divergent, ``NC.`` for not convergent, else ``iters(time s)``."""
    if status == CONVERGED:
        return f"{iterations}({wall_time:.2f}s)"
    if status in (DIVERGED, SINGULAR):
        return "D."
    if status == MAX_ITER:
        return "NC."
    return "ERR"


def format_table(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows)


def thread_count() -> int:
    raw = os.environ.get("SICNM_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def _map(fn, items: list) -> list:
    n = min(thread_count(), len(items)) or 1
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def case_label(path: str) -> str:
    return Path(path).stem


def _load_all(spec: ExperimentSpec) -> dict[str, tuple[NetworkCase | None, str]]:
    out = {}
    for path in spec.cases:
        try:
            out[path] = (load_case(resolve_case_path(path)), "")
        except (OSError, CaseError) as exc:
            out[path] = (None, f"{type(exc).__name__}: {exc}")
    return out


def _options(spec: ExperimentSpec, method: str, **forced):
    return default_options(method, **{**spec.opts.get(method, {}), **forced})


def _safe_solve(prob: PfProblem, y0: np.ndarray, method: str, opts) -> SolveReport | str:
    try:
        return solve(prob, y0, method, opts)
    except (SicnmError, ValueError, ArithmeticError) as exc:
        return f"{type(exc).__name__}: {exc}"


def run_comparison(spec: ExperimentSpec) -> BenchReport:
    """Solve every case with every method from a flat start."""
    cases = _load_all(spec)
    jobs = [(path, m) for path in spec.cases for m in spec.methods]

    def cell(job):
        path, method = job
        case, err = cases[path]
        label = case_label(path)
        if case is None:
            return CellResult(label, method, ERROR, 0, 0.0, {}, None, err)
        try:
            opts = _options(spec, method)
            prob = build_problem(case)
        except (SicnmError, ValueError, TypeError) as exc:
            return CellResult(label, method, ERROR, 0, 0.0, {}, None, f"{type(exc).__name__}: {exc}")
        rep = _safe_solve(prob, initial_state(prob, case, "flat"), method, opts)
        if isinstance(rep, str):
            return CellResult(label, method, ERROR, 0, 0.0, {}, None, rep)
        fe = float(rep.final_error)
        return CellResult(
            label, method, rep.status, rep.iterations, rep.wall_time, rep.counters.as_dict(),
            fe if np.isfinite(fe) else None, rep.message, rep.trace,
        )

    return BenchReport(seed=spec.seed, cells=_map(cell, jobs))


def perturbed_start(
    prob: PfProblem,
    case: NetworkCase,
    perturb: PerturbSpec,
    seed: int,
    run: int,
    base: str = "case_values",
) -> np.ndarray:
    """Start ``base`` with clipped normal deviations on a random share of angles.

    ``sigma`` is a quarter of the interval width so the interval spans two
    standard deviations either side of zero.
    """
    rng = np.random.default_rng([seed, run])
    va, vm = split_state(prob, initial_state(prob, case, base))
    candidates = np.asarray(prob.idx.pvpq)
    k = max(1, int(round(perturb.fraction_of_buses * len(candidates)))) if len(candidates) else 0
    picked = rng.choice(candidates, size=k, replace=False) if k else np.array([], dtype=int)
    lo, hi = perturb.angle_range_rad
    dev = np.clip(rng.normal(0.0, (hi - lo) / 4.0, size=k), lo, hi)
    va = va.copy()
    va[picked] += dev
    return state_from_voltages(prob, va, vm)


def run_limit_test(spec: ExperimentSpec) -> BenchReport:
    """Repeat every (case, method) solve from randomly perturbed starts."""
    if spec.perturb is None:
        raise ValueError("limit test needs a 'perturb' section")
    pert = spec.perturb
    cases = _load_all(spec)
    probs = {p: (build_problem(c) if c is not None else None) for p, (c, _) in cases.items()}
    jobs = [(path, m, r) for path in spec.cases for m in spec.methods for r in range(pert.runs)]

    def one(job) -> RunRecord:
        path, method, run = job
        case, _ = cases[path]
        prob = probs[path]
        if case is None:
            return RunRecord(run, ERROR, 0, 0.0)
        y0 = perturbed_start(prob, case, pert, spec.seed, run)
        opts = _options(spec, method, h0=0.1, max_iter=pert.iter_cap)
        rep = _safe_solve(prob, y0, method, opts)
        if isinstance(rep, str):
            return RunRecord(run, ERROR, 0, 0.0)
        return RunRecord(run, rep.status, rep.iterations, rep.wall_time)

    records = _map(one, jobs)
    report = BenchReport(seed=spec.seed)
    i = 0
    for path in spec.cases:
        for m in spec.methods:
            report.limit.append(LimitSummary(case_label(path), m, records[i:i + pert.runs]))
            i += pert.runs
    return report


def joint_mean_iterations(report: BenchReport, case: str, methods: Iterable[str]) -> dict[str, float | None]:
    """Mean iterations per method over the runs where every listed method converged."""
    methods = list(methods)
    sums = {m: report.limit_summary(case, m) for m in methods}
    ok = None
    for s in sums.values():
        conv = {r.run for r in s.converged_runs}
        ok = conv if ok is None else ok & conv
    ok = ok or set()
    out: dict[str, float | None] = {}
    for m, s in sums.items():
        its = [r.iterations for r in s.runs if r.run in ok]
        out[m] = float(np.mean(its)) if its else None
    return out


def _trace_of(obj: SolveReport | CellResult | IterationTrace) -> IterationTrace:
    if isinstance(obj, IterationTrace):
        return obj
    if obj.trace is None:
        raise ValueError("no trace recorded for this result")
    return obj.trace


def emit_trace_csv(obj: SolveReport | CellResult | IterationTrace, path: str | Path) -> tuple[Path, Path]:
    """Write the trace as CSV (iter, err_inf, h, accepted) plus a JSON series file.

    Floats use ``repr`` so identical runs give byte-identical files. Returns
    the two paths written; the JSON sits next to the CSV with suffix ``.json``.
    """
    trace = _trace_of(obj)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "err_inf", "h", "accepted"])
        for r in trace:
            w.writerow([r.iter, repr(r.err_inf), repr(r.h), int(r.accepted)])
    series = {
        "iter": [r.iter for r in trace],
        "err_inf": [r.err_inf if np.isfinite(r.err_inf) else None for r in trace],
        "h": [r.h for r in trace],
        "accepted": [r.accepted for r in trace],
    }
    jpath = path.with_suffix(".json")
    jpath.write_text(json.dumps(series, indent=1) + "\n", encoding="utf-8")
    return path, jpath


def write_outputs(report: BenchReport, out_dir: str | Path) -> None:
    """Report JSON, summary text/CSV and one trace pair per comparison cell."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=1) + "\n", encoding="utf-8")
    (out / "summary.txt").write_text(report.summary_text() + "\n", encoding="utf-8")
    (out / "summary.csv").write_text(report.summary_csv(), encoding="utf-8")
    for c in report.cells:
        if c.trace is not None:
            emit_trace_csv(c, out / "traces" / f"{c.case}__{c.method}.csv")
