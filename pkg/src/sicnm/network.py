"""Nodal admittance matrix and state-vector indexing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .caseio import PQ, PV, REF, NetworkCase
from .errors import NoSlack, ZeroImpedanceBranch


@dataclass(frozen=True, eq=False)
class YBus:
    n: int
    matrix: sp.csr_matrix


@dataclass(frozen=True, eq=False)
class StateIndexing:
    """Bus roles, as positions into ``case.buses``.

    The state vector is laid out as ``[va[pvpq]; vm[pq]]`` where ``pvpq`` is
    the union of PV and PQ buses ordered by bus id.
    """

    slack: int
    pv: np.ndarray
    pq: np.ndarray
    pvpq: np.ndarray
    n_bus: int

    @property
    def n_state(self) -> int:
        return len(self.pvpq) + len(self.pq)

    @property
    def n_angle(self) -> int:
        return len(self.pvpq)


def build_ybus(case: NetworkCase) -> YBus:
    """Assemble Ybus with the pi branch model; out-of-service branches are skipped."""
    pos = {b.id: i for i, b in enumerate(case.buses)}
    n = len(case.buses)

    live = [br for br in case.branches if br.status == 1]
    for br in live:
        if br.r == 0.0 and br.x == 0.0:
            raise ZeroImpedanceBranch(f"branch {br.from_bus}-{br.to_bus} has r = x = 0")

    f = np.array([pos[br.from_bus] for br in live], dtype=int)
    t = np.array([pos[br.to_bus] for br in live], dtype=int)
    r = np.array([br.r for br in live])
    x = np.array([br.x for br in live])
    b = np.array([br.b for br in live])
    tap = np.array([br.tap for br in live]) * np.exp(1j * np.deg2rad([br.shift for br in live]))

    ys = 1.0 / (r + 1j * x) if live else np.zeros(0, complex)
    ytt = ys + 0.5j * b
    yff = ytt / (tap * np.conj(tap))
    yft = -ys / np.conj(tap)
    ytf = -ys / tap

    ysh = np.array([(bus.gs + 1j * bus.bs) / case.base_mva for bus in case.buses])

    rows = np.concatenate([f, f, t, t, np.arange(n)])
    cols = np.concatenate([f, t, f, t, np.arange(n)])
    vals = np.concatenate([yff, yft, ytf, ytt, ysh])
    y = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    y.sum_duplicates()
    return YBus(n, y)


def effective_bus_types(case: NetworkCase) -> list[int]:
    """Bus types after demoting PV buses that have no in-service generator."""
    has_gen = {g.bus for g in case.gens if g.status == 1}
    return [PQ if (b.btype == PV and b.id not in has_gen) else b.btype for b in case.buses]


def index_states(case: NetworkCase) -> StateIndexing:
    types = effective_bus_types(case)
    order = sorted(range(len(case.buses)), key=lambda i: case.buses[i].id)
    ref = [i for i in order if types[i] == REF]
    if not ref:
        raise NoSlack("no slack (type 3) bus")
    pv = np.array([i for i in order if types[i] == PV], dtype=int)
    pq = np.array([i for i in order if types[i] == PQ], dtype=int)
    pvpq = np.array([i for i in order if types[i] in (PV, PQ)], dtype=int)
    return StateIndexing(ref[0], pv, pq, pvpq, len(case.buses))
