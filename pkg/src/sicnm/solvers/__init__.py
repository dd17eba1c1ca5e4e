"""Iteration engines and the method registry used by the CLI and benchmarks.

Method ids follow the comparison tables: ``m1`` Newton-Raphson, ``m2``
Iwamoto, ``m3`` explicit CNM (RK4), ``m7-*`` implicit CNM variants and
``m8-*`` the semi-implicit Rosenbrock CNM.
"""

from __future__ import annotations

from functools import partial
from typing import Callable

import numpy as np

from ..tableau import rodas3d, rodas4
from .common import (
    CONVERGED,
    DIVERGED,
    MAX_ITER,
    SINGULAR,
    IterationTrace,
    Problem,
    ResidualSystem,
    SolveReport,
    SolverOptions,
    TraceRecord,
)
from .ecnm import ecnm_rk4
from .icnm import icnm
from .newton import iwamoto, newton_raphson
from .qlimits import enforce_q_limits, generator_q
from .rosenbrock import error_ratio, initial_rate, sicnm_solve, sicnm_step, step_size_update

Solver = Callable[[Problem, np.ndarray, SolverOptions], SolveReport]


def _sicnm(tab_factory, prob, y0, opts):
    return sicnm_solve(prob, y0, opts, tab_factory())


METHODS: dict[str, Solver] = {
    "m1": newton_raphson,
    "m2": iwamoto,
    "m3": ecnm_rk4,
    "m7-jh": partial(icnm, variant="JH"),
    "m7-j": partial(icnm, variant="J"),
    "m7-j1": partial(icnm, variant="J1"),
    "m7-j0": partial(icnm, variant="J0"),
    "m8-rodas4": partial(_sicnm, rodas4),
    "m8-rodas3d": partial(_sicnm, rodas3d),
}

_DEFAULT_H0 = {"m3": 1.0, "m7-jh": 0.01, "m7-j": 0.01, "m7-j1": 0.01, "m7-j0": 0.01}


def default_options(method: str, **overrides) -> SolverOptions:
    """Per-method defaults (tol 1e-5, 1000 iterations, atol = rtol = 0.1)."""
    if method not in METHODS:
        raise KeyError(f"unknown method {method!r}; known: {', '.join(METHODS)}")
    base = {"h0": _DEFAULT_H0.get(method, 0.1)}
    base.update({k: v for k, v in overrides.items() if v is not None})
    return SolverOptions(**base)


def solve(prob: Problem, y0: np.ndarray, method: str, opts: SolverOptions | None = None) -> SolveReport:
    if method not in METHODS:
        raise KeyError(f"unknown method {method!r}; known: {', '.join(METHODS)}")
    report = METHODS[method](prob, y0, opts or default_options(method))
    report.method = method
    return report


__all__ = [
    "CONVERGED", "DIVERGED", "MAX_ITER", "SINGULAR", "METHODS", "IterationTrace", "ResidualSystem",
    "SolveReport", "SolverOptions", "TraceRecord", "default_options", "ecnm_rk4",
    "enforce_q_limits", "error_ratio", "generator_q", "icnm", "initial_rate", "iwamoto",
    "newton_raphson", "sicnm_solve", "sicnm_step", "solve", "step_size_update",
]
