"""Generator reactive-limit enforcement by PV-to-PQ conversion and re-solve."""

from __future__ import annotations

import dataclasses
from typing import Callable

import numpy as np

from ..caseio import PQ, PV, NetworkCase
from ..counters import Counters
from ..errors import CycleDetected
from ..network import effective_bus_types
from ..pfcore import PfProblem, build_problem, initial_state, injections, split_state, state_from_voltages
from .common import IterationTrace, SolveReport, SolverOptions

InnerSolver = Callable[[PfProblem, np.ndarray, SolverOptions], SolveReport]

Q_EPS = 1e-6  # MVAr


def generator_q(case: NetworkCase, prob: PfProblem, y: np.ndarray) -> np.ndarray:
    """Reactive output (MVAr) of each generator at state ``y``; NaN for offline units.

    Units at voltage-controlled buses share the bus total in proportion to
    their reactive range (equally if the ranges are not usable); units at PQ
    buses keep their scheduled output.
    """
    pos = {b.id: i for i, b in enumerate(case.buses)}
    types = effective_bus_types(case)
    s_inj = injections(prob, y) * case.base_mva
    qg = np.full(len(case.gens), np.nan)

    by_bus: dict[int, list[int]] = {}
    for k, g in enumerate(case.gens):
        if g.status == 1:
            by_bus.setdefault(pos[g.bus], []).append(k)

    for i, ks in by_bus.items():
        if types[i] == PQ:
            for k in ks:
                qg[k] = case.gens[k].qg
            continue
        total = s_inj[i].imag + case.buses[i].qd
        ranges = np.array([case.gens[k].qmax - case.gens[k].qmin for k in ks])
        if len(ks) > 1 and np.all(np.isfinite(ranges)) and ranges.sum() > 0:
            qmin_sum = sum(case.gens[k].qmin for k in ks)
            for k, r in zip(ks, ranges):
                qg[k] = case.gens[k].qmin + (total - qmin_sum) * r / ranges.sum()
        else:
            for k in ks:
                qg[k] = total / len(ks)
    return qg


def _violations(case: NetworkCase, qg: np.ndarray) -> list[int]:
    pos = {b.id: i for i, b in enumerate(case.buses)}
    types = effective_bus_types(case)
    out = []
    for k, g in enumerate(case.gens):
        if g.status != 1 or types[pos[g.bus]] != PV:
            continue
        if qg[k] > g.qmax + Q_EPS or qg[k] < g.qmin - Q_EPS:
            out.append(k)
    return out


def _convert(case: NetworkCase, qg: np.ndarray, violating: list[int]) -> tuple[NetworkCase, list[int]]:
    """Pin violators at their limit, fix the other units at those buses, demote the buses."""
    pos = {b.id: i for i, b in enumerate(case.buses)}
    buses = list(case.buses)
    gens = list(case.gens)
    hit = sorted({pos[case.gens[k].bus] for k in violating})
    for k, g in enumerate(gens):
        if g.status != 1 or pos[g.bus] not in hit:
            continue
        q = float(np.clip(qg[k], g.qmin, g.qmax))
        gens[k] = dataclasses.replace(g, qg=q)
    for i in hit:
        buses[i] = dataclasses.replace(buses[i], btype=PQ)
    new = dataclasses.replace(case, buses=tuple(buses), gens=tuple(gens))
    return new, [case.buses[i].id for i in hit]


def enforce_q_limits(
    inner_solver: InnerSolver,
    case: NetworkCase,
    opts: SolverOptions | None = None,
    start: str | np.ndarray = "flat",
    max_rounds: int | None = None,
) -> SolveReport:
    """Solve, convert PV buses whose units violate Q limits to PQ, re-solve.

    Conversions are one-way. The returned report is the last inner solve with
    counters, iterations, trace and wall time accumulated over all rounds and
    ``converted_buses`` listing the demoted bus ids in conversion order.
    ``start`` is a start mode for :func:`initial_state` or an explicit state.
    """
    opts = opts or SolverOptions()
    prob = build_problem(case)
    y0 = initial_state(prob, case, start) if isinstance(start, str) else np.array(start, dtype=float)
    total = Counters()
    trace = IterationTrace()
    converted: list[int] = []
    iterations = 0
    wall = 0.0
    seen: set[frozenset[int]] = set()
    rounds = max_rounds if max_rounds is not None else len(case.buses) + 1

    for _ in range(rounds):
        rep = inner_solver(prob, y0, opts)
        total.add(rep.counters)
        trace.records.extend(rep.trace.records)
        iterations += rep.iterations
        wall += rep.wall_time
        merged = dataclasses.replace(
            rep, counters=total, trace=trace, iterations=iterations, wall_time=wall,
            converted_buses=list(converted), case=case,
        )
        if not rep.converged:
            return merged

        qg = generator_q(case, prob, rep.final_state)
        bad = _violations(case, qg)
        if not bad:
            return merged

        pv_set = frozenset(i for i, t in enumerate(effective_bus_types(case)) if t == PV)
        if pv_set in seen:
            raise CycleDetected("bus types repeat without settling", merged)
        seen.add(pv_set)

        va, vm = split_state(prob, rep.final_state)
        case, ids = _convert(case, qg, bad)
        converted.extend(ids)
        prob = build_problem(case)
        y0 = state_from_voltages(prob, va, vm)

    raise CycleDetected(f"no settled bus types after {rounds} rounds", merged)
