"""Polar AC power-flow residual, Jacobian and Hessian action.

The unknown vector is ``y = [va[pvpq]; vm[pq]]`` and the residual is the
MATPOWER mismatch ``g = S_calc - S_sched``:

    g = [Re(dS)[pvpq]; Im(dS)[pq]],   dS = V * conj(Ybus V) - S_sched

All matrices are returned as ``scipy.sparse.csr_matrix``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.sparse as sp

from .caseio import PQ, NetworkCase
from .errors import NonFinite
from .network import StateIndexing, YBus, build_ybus, effective_bus_types, index_states


@dataclass(frozen=True, eq=False)
class PfProblem:
    ybus: YBus
    idx: StateIndexing
    p_sched: np.ndarray
    q_sched: np.ndarray
    v_setpoint: np.ndarray
    slack_angle: float
    va_fixed: np.ndarray
    """Angles used for buses without an angle unknown (the slack)."""

    @property
    def n_state(self) -> int:
        return self.idx.n_state

    @property
    def s_sched(self) -> np.ndarray:
        return self.p_sched + 1j * self.q_sched


@dataclass
class DaeState:
    """A power-flow state ``y`` with its companion rate ``z = dy/dt``."""

    y: np.ndarray
    z: np.ndarray


def build_problem(case: NetworkCase) -> PfProblem:
    """Per-unitize ``case`` and assemble everything the residual needs."""
    ybus = build_ybus(case)
    idx = index_states(case)
    n = len(case.buses)
    pos = {b.id: i for i, b in enumerate(case.buses)}
    types = effective_bus_types(case)

    p = np.array([-b.pd for b in case.buses], dtype=float)
    q = np.array([-b.qd for b in case.buses], dtype=float)
    v_set = np.array([b.vm for b in case.buses], dtype=float)
    seen: set[int] = set()
    for g in case.gens:
        if g.status != 1:
            continue
        i = pos[g.bus]
        p[i] += g.pg
        q[i] += g.qg
        # first in-service generator at a voltage-controlled bus sets its magnitude
        if types[i] != PQ and i not in seen:
            v_set[i] = g.vg
            seen.add(i)

    va = np.deg2rad([b.va for b in case.buses])
    slack_angle = float(va[idx.slack])
    va_fixed = np.zeros(n)
    va_fixed[idx.slack] = slack_angle
    return PfProblem(
        ybus=ybus,
        idx=idx,
        p_sched=p / case.base_mva,
        q_sched=q / case.base_mva,
        v_setpoint=v_set,
        slack_angle=slack_angle,
        va_fixed=va_fixed,
    )


def split_state(prob: PfProblem, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full-length (va, vm) bus vectors for state ``y``."""
    idx = prob.idx
    y = np.asarray(y, dtype=float)
    if y.shape != (idx.n_state,):
        raise ValueError(f"state has shape {y.shape}, expected ({idx.n_state},)")
    va = prob.va_fixed.copy()
    vm = prob.v_setpoint.copy()
    va[idx.pvpq] = y[: idx.n_angle]
    vm[idx.pq] = y[idx.n_angle:]
    return va, vm


def voltages(prob: PfProblem, y: np.ndarray) -> np.ndarray:
    va, vm = split_state(prob, y)
    return vm * np.exp(1j * va)


def state_from_voltages(prob: PfProblem, va: np.ndarray, vm: np.ndarray) -> np.ndarray:
    idx = prob.idx
    return np.concatenate([va[idx.pvpq], vm[idx.pq]])


def _checked(prob: PfProblem, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise NonFinite("state contains NaN or Inf")
    return y


def injections(prob: PfProblem, y: np.ndarray) -> np.ndarray:
    """Complex bus power injections ``V * conj(Ybus V)`` in per unit."""
    v = voltages(prob, _checked(prob, y))
    return v * np.conj(prob.ybus.matrix @ v)


def mismatch(prob: PfProblem, y: np.ndarray) -> np.ndarray:
    ds = injections(prob, y) - prob.s_sched
    g = np.concatenate([ds.real[prob.idx.pvpq], ds.imag[prob.idx.pq]])
    if not np.all(np.isfinite(g)):
        raise NonFinite("mismatch evaluated to NaN or Inf")
    return g


class _JacPattern:
    """Fixed CSR structure of the Jacobian and the scatter map into it.

    Entries of ``Ybus`` plus its diagonal form the bus-level pattern ``P``.
    Each Jacobian nonzero is one (block, P-entry) pair, so Jacobian-shaped
    matrices are filled by elementwise work on ``P`` and a single gather.
    """

    def __init__(self, ybus: sp.csr_matrix, idx: StateIndexing) -> None:
        n = idx.n_bus
        pat = sp.coo_matrix(ybus + sp.eye(n, format="csr") * 1e-300)
        pat.sum_duplicates()
        self.rows = pat.row.astype(np.intp)
        self.cols = pat.col.astype(np.intp)
        self.y = np.asarray(ybus[self.rows, self.cols]).ravel()
        self.diag = self.rows == self.cols

        pos_a = np.full(n, -1)
        pos_a[idx.pvpq] = np.arange(idx.n_angle)
        pos_m = np.full(n, -1)
        pos_m[idx.pq] = idx.n_angle + np.arange(len(idx.pq))

        # block order: (d_va real, pvpq x pvpq), (d_vm real, pvpq x pq),
        #              (d_va imag, pq x pvpq),   (d_vm imag, pq x pq)
        src, jr, jc = [], [], []
        m = len(self.rows)
        for k, (rpos, cpos) in enumerate([(pos_a, pos_a), (pos_a, pos_m), (pos_m, pos_a), (pos_m, pos_m)]):
            sel = np.flatnonzero((rpos[self.rows] >= 0) & (cpos[self.cols] >= 0))
            src.append(k * m + sel)
            jr.append(rpos[self.rows[sel]])
            jc.append(cpos[self.cols[sel]])
        src = np.concatenate(src)
        jr = np.concatenate(jr)
        jc = np.concatenate(jc)
        order = np.lexsort((jc, jr))
        self.src = src[order]
        self.indices = jc[order].astype(np.int32)
        self.indptr = np.zeros(idx.n_state + 1, dtype=np.int32)
        np.cumsum(np.bincount(jr, minlength=idx.n_state), out=self.indptr[1:])
        self.shape = (idx.n_state, idx.n_state)

    def assemble(self, d_va: np.ndarray, d_vm: np.ndarray) -> sp.csr_matrix:
        parts = np.concatenate([d_va.real, d_vm.real, d_va.imag, d_vm.imag])
        return sp.csr_matrix((parts[self.src], self.indices.copy(), self.indptr.copy()), shape=self.shape)


def _pattern(prob: PfProblem) -> _JacPattern:
    pat = prob.__dict__.get("_pattern")
    if pat is None:
        pat = _JacPattern(prob.ybus.matrix, prob.idx)
        object.__setattr__(prob, "_pattern", pat)
    return pat


def _dsbus_entries(pat: _JacPattern, v: np.ndarray, ibus: np.ndarray):
    """Entries of dS/dVa and dS/dVm on the bus pattern.

    dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
    dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
    """
    r, c, y, d = pat.rows, pat.cols, pat.y, pat.diag
    vn = v / np.abs(v)
    d_va = -1j * v[r] * np.conj(y * v[c])
    d_va[d] += 1j * v[r[d]] * np.conj(ibus[r[d]])
    d_vm = v[r] * np.conj(y * vn[c])
    d_vm[d] += np.conj(ibus[r[d]]) * vn[r[d]]
    return d_va, d_vm


def jacobian(prob: PfProblem, y: np.ndarray) -> sp.csr_matrix:
    v = voltages(prob, _checked(prob, y))
    pat = _pattern(prob)
    d_va, d_vm = _dsbus_entries(pat, v, prob.ybus.matrix @ v)
    jac = pat.assemble(d_va, d_vm)
    if not np.all(np.isfinite(jac.data)):
        raise NonFinite("Jacobian evaluated to NaN or Inf")
    return jac


def hessian_action(prob: PfProblem, y: np.ndarray, z: np.ndarray) -> sp.csr_matrix:
    """Directional derivative of the Jacobian along ``z``.

    Returns ``W`` with ``W[i, j] = sum_k d2 g_i / (dy_j dy_k) * z_k``, i.e.
    ``d/de J(y + e z)`` at ``e = 0``. Obtained by differentiating the entries
    of ``dS/dVa`` and ``dS/dVm`` along the voltage perturbation implied by ``z``.
    """
    y = _checked(prob, y)
    z = _checked(prob, z)
    if z.shape != y.shape:
        raise ValueError(f"z has shape {z.shape}, expected {y.shape}")
    idx = prob.idx
    ybus = prob.ybus.matrix
    va, vm = split_state(prob, y)
    v = vm * np.exp(1j * va)
    vn = v / vm

    dva = np.zeros(idx.n_bus)
    dvm = np.zeros(idx.n_bus)
    dva[idx.pvpq] = z[: idx.n_angle]
    dvm[idx.pq] = z[idx.n_angle:]

    # first-order changes of V, V/|V| and I along z
    dv = v * (1j * dva + dvm / vm)
    dvn = 1j * vn * dva
    ibus = ybus @ v
    dibus = ybus @ dv

    pat = _pattern(prob)
    r, c, yy, d = pat.rows, pat.cols, pat.y, pat.diag
    rd = r[d]
    w_va = -1j * (dv[r] * np.conj(yy * v[c]) + v[r] * np.conj(yy * dv[c]))
    w_va[d] += 1j * (dv[rd] * np.conj(ibus[rd]) + v[rd] * np.conj(dibus[rd]))
    w_vm = dv[r] * np.conj(yy * vn[c]) + v[r] * np.conj(yy * dvn[c])
    w_vm[d] += np.conj(dibus[rd]) * vn[rd] + np.conj(ibus[rd]) * dvn[rd]
    w = pat.assemble(w_va, w_vm)
    if not np.all(np.isfinite(w.data)):
        raise NonFinite("Hessian action evaluated to NaN or Inf")
    return w


def initial_state(
    prob: PfProblem, case: NetworkCase, mode: Literal["flat", "case_values"] = "flat"
) -> np.ndarray:
    """Starting point ``y0``: flat start or the voltages stored in the case.

    PV and slack magnitudes are never part of ``y``; they come from the
    generator setpoints held in ``prob.v_setpoint`` either way.
    """
    idx = prob.idx
    if mode == "flat":
        return np.concatenate([np.zeros(idx.n_angle), np.ones(len(idx.pq))])
    if mode == "case_values":
        va = np.deg2rad([b.va for b in case.buses])
        vm = np.array([b.vm for b in case.buses], dtype=float)
        return state_from_voltages(prob, va, vm)
    raise ValueError(f"unknown start mode {mode!r}")

