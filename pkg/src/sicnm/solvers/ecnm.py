"""Explicit continuous Newton method: classical RK4 on dy/dt = -J(y)^-1 g(y) (M3)."""

from __future__ import annotations

import numpy as np

from ..errors import NonFinite, Singular
from ..linalg import lu_factorize
from .common import CONVERGED, DIVERGED, MAX_ITER, SINGULAR, Problem, Run, SolveReport, SolverOptions, blew_up, safe_check


def _newton_flow(run: Run, y: np.ndarray) -> np.ndarray:
    gy = run.g(y)
    return -lu_factorize(run.jac(y), run.counters).solve(gy)


def ecnm_rk4(prob: Problem, y0: np.ndarray, opts: SolverOptions | None = None) -> SolveReport:
    """Fixed step ``opts.h0``; every stage refactorizes the Jacobian."""
    opts = opts or SolverOptions()
    run = Run("m3", prob, opts)
    h = opts.h0
    y = np.array(y0, dtype=float)
    _, err = safe_check(run, y)
    err0 = err
    if blew_up(err):
        return run.finish(DIVERGED, y, 0, err0, err, "non-finite initial residual")
    if err <= opts.tol:
        return run.finish(CONVERGED, y, 0, err0, err)

    for it in range(1, opts.max_iter + 1):
        try:
            k1 = _newton_flow(run, y)
            k2 = _newton_flow(run, y + 0.5 * h * k1)
            k3 = _newton_flow(run, y + 0.5 * h * k2)
            k4 = _newton_flow(run, y + h * k3)
        except Singular as exc:
            return run.finish(SINGULAR, y, it - 1, err0, err, str(exc))
        except NonFinite as exc:
            return run.finish(DIVERGED, y, it - 1, err0, err, str(exc))
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _, err = safe_check(run, y)
        run.counters.accepted_steps += 1
        run.trace.add(it, err, h, True)
        if blew_up(err):
            return run.finish(DIVERGED, y, it, err0, err)
        if err <= opts.tol:
            return run.finish(CONVERGED, y, it, err0, err)
    return run.finish(MAX_ITER, y, opts.max_iter, err0, err)
