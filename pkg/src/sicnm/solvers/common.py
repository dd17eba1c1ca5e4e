"""Options, reports and shared plumbing for every iteration engine."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
import scipy.sparse as sp

from ..counters import Counters
from ..errors import NonFinite
from ..pfcore import PfProblem, hessian_action, jacobian, mismatch

CONVERGED = "converged"
DIVERGED = "diverged"
MAX_ITER = "max_iter"
SINGULAR = "singular"

DIVERGENCE_LIMIT = 1e10


@dataclass(frozen=True, eq=False)
class ResidualSystem:
    """A generic ``g(y) = 0`` problem given by callables.

    Every engine accepts one of these in place of a :class:`PfProblem`;
    ``hess_action(y, z)`` must return ``d/de J(y + e z)`` at ``e = 0``.
    """

    g: Callable[[np.ndarray], np.ndarray]
    jac: Callable[[np.ndarray], Any]
    hess_action: Callable[[np.ndarray, np.ndarray], Any]
    n_state: int


Problem = PfProblem | ResidualSystem


def eval_g(prob: Problem, y: np.ndarray) -> np.ndarray:
    if isinstance(prob, ResidualSystem):
        g = np.asarray(prob.g(np.asarray(y, dtype=float)), dtype=float)
        if not np.all(np.isfinite(g)):
            raise NonFinite("residual evaluated to NaN or Inf")
        return g
    return mismatch(prob, y)


def eval_jac(prob: Problem, y: np.ndarray) -> sp.csr_matrix:
    if isinstance(prob, ResidualSystem):
        return sp.csr_matrix(prob.jac(np.asarray(y, dtype=float)), dtype=float)
    return jacobian(prob, y)


def eval_hz(prob: Problem, y: np.ndarray, z: np.ndarray) -> sp.csr_matrix:
    if isinstance(prob, ResidualSystem):
        return sp.csr_matrix(prob.hess_action(np.asarray(y, dtype=float), np.asarray(z, dtype=float)), dtype=float)
    return hessian_action(prob, y, z)


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-5
    max_iter: int = 1000
    h0: float = 0.1
    atol: float = 0.1
    rtol: float = 0.1
    h_min: float = 1e-8
    h_max: float = 10.0
    safety: float = 0.9
    max_growth: float = 2.0

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")
        if not (0 < self.h_min <= self.h0 <= self.h_max):
            raise ValueError("need 0 < h_min <= h0 <= h_max")

    def replace(self, **changes: Any) -> SolverOptions:
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    err_inf: float
    h: float
    accepted: bool


@dataclass
class IterationTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def add(self, iter: int, err_inf: float, h: float, accepted: bool) -> None:
        self.records.append(TraceRecord(iter, float(err_inf), float(h), bool(accepted)))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


@dataclass
class SolveReport:
    method: str
    status: str
    iterations: int
    trace: IterationTrace
    final_state: np.ndarray
    counters: Counters
    wall_time: float
    initial_error: float
    final_error: float
    message: str = ""
    converted_buses: list[int] = field(default_factory=list)
    case: Any = None
    """Network the final state belongs to, when it differs from the input (Q limits)."""

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def to_dict(self, include_state: bool = True) -> dict[str, Any]:
        out: dict[str, Any] = {
            "method": self.method,
            "status": self.status,
            "iterations": self.iterations,
            "initial_error": _json_float(self.initial_error),
            "final_error": _json_float(self.final_error),
            "wall_time": self.wall_time,
            "counters": self.counters.as_dict(),
            "message": self.message,
            "trace": [dataclasses.asdict(r) for r in self.trace],
        }
        if self.converted_buses:
            out["converted_buses"] = list(self.converted_buses)
        if include_state:
            out["final_state"] = [_json_float(v) for v in self.final_state]
        return out


def _json_float(x: float) -> float | None:
    x = float(x)
    return x if np.isfinite(x) else None


def norm_inf(v: np.ndarray) -> float:
    return float(np.max(np.abs(v))) if len(v) else 0.0


class Run:
    """Mutable bookkeeping for one solver invocation.

    Wraps residual/Jacobian evaluation so counters stay honest and keeps the
    wall clock. Never shared between runs.
    """

    def __init__(self, method: str, prob: Problem, opts: SolverOptions) -> None:
        self.method = method
        self.prob = prob
        self.opts = opts
        self.counters = Counters()
        self.trace = IterationTrace()
        self._t0 = time.perf_counter()

    def g(self, y: np.ndarray) -> np.ndarray:
        self.counters.g_evals += 1
        return eval_g(self.prob, y)

    def check(self, y: np.ndarray) -> tuple[np.ndarray, float]:
        """Residual evaluated for the stopping test."""
        self.counters.residual_checks += 1
        gy = self.g(y)
        return gy, norm_inf(gy)

    def jac(self, y: np.ndarray):
        self.counters.j_evals += 1
        return eval_jac(self.prob, y)

    def finish(
        self,
        status: str,
        y: np.ndarray,
        iterations: int,
        initial_error: float,
        final_error: float,
        message: str = "",
    ) -> SolveReport:
        return SolveReport(
            method=self.method,
            status=status,
            iterations=iterations,
            trace=self.trace,
            final_state=np.array(y, dtype=float),
            counters=self.counters,
            wall_time=time.perf_counter() - self._t0,
            initial_error=initial_error,
            final_error=final_error,
            message=message,
        )


def blew_up(err: float) -> bool:
    return not np.isfinite(err) or err > DIVERGENCE_LIMIT


def safe_check(run: Run, y: np.ndarray) -> tuple[np.ndarray | None, float]:
    """Like :meth:`Run.check` but maps NonFinite to an infinite error."""
    try:
        return run.check(y)
    except NonFinite:
        return None, float("inf")
