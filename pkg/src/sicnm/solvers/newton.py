"""Newton-Raphson (M1) and Iwamoto's optimal-multiplier variant (M2)."""

from __future__ import annotations

import numpy as np

from ..errors import NonFinite, Singular
from ..linalg import lu_factorize
from .common import (
    CONVERGED,
    DIVERGED,
    MAX_ITER,
    SINGULAR,
    Problem,
    Run,
    SolveReport,
    SolverOptions,
    blew_up,
    safe_check,
)


def _newton_loop(run: Run, y0: np.ndarray, multiplier) -> SolveReport:
    opts = run.opts
    y = np.array(y0, dtype=float)
    gy, err = safe_check(run, y)
    err0 = err
    if blew_up(err):
        return run.finish(DIVERGED, y, 0, err0, err, "non-finite initial residual")
    if err <= opts.tol:
        return run.finish(CONVERGED, y, 0, err0, err)

    for it in range(1, opts.max_iter + 1):
        try:
            jac = run.jac(y)
            dx = -lu_factorize(jac, run.counters).solve(gy)
            mu = multiplier(run, y, gy, dx)
        except Singular as exc:
            return run.finish(SINGULAR, y, it - 1, err0, err, str(exc))
        except NonFinite as exc:
            return run.finish(DIVERGED, y, it - 1, err0, err, str(exc))
        y = y + mu * dx
        gy, err = safe_check(run, y)
        run.counters.accepted_steps += 1
        run.trace.add(it, err, mu, True)
        if blew_up(err):
            return run.finish(DIVERGED, y, it, err0, err)
        if err <= opts.tol:
            return run.finish(CONVERGED, y, it, err0, err)
    return run.finish(MAX_ITER, y, opts.max_iter, err0, err)


def newton_raphson(prob: Problem, y0: np.ndarray, opts: SolverOptions | None = None) -> SolveReport:
    run = Run("m1", prob, opts or SolverOptions())
    return _newton_loop(run, y0, lambda run, y, gy, dx: 1.0)


def iwamoto_multiplier(g0: np.ndarray, g_full: np.ndarray) -> float:
    """Step length minimizing ``|g0 + mu*b + mu^2*c|^2`` along the Newton direction.

    ``b = J dx = -g0`` and the quadratic term is taken as
    ``c = g(y + dx) - g0 - b = g(y + dx)``, i.e. the residual is modelled as
    exactly quadratic along the ray (exact in rectangular coordinates, a
    second-order model in polar ones).
    """
    a = np.asarray(g0, dtype=float)
    b = -a
    c = np.asarray(g_full, dtype=float)
    # d/dmu of the cost, divided by 2: cubic with these coefficients
    coeffs = [2.0 * c @ c, 3.0 * b @ c, b @ b + 2.0 * a @ c, a @ b]
    if coeffs[0] == 0.0 and coeffs[1] == 0.0:
        return 1.0
    roots = np.roots(coeffs)
    real = [r.real for r in roots if abs(r.imag) <= 1e-9 * max(1.0, abs(r))]
    if not real:
        return 1.0

    def cost(mu: float) -> float:
        r = a + mu * b + mu * mu * c
        return float(r @ r)

    return float(min(real, key=lambda mu: (cost(mu), abs(mu - 1.0))))


def iwamoto(prob: Problem, y0: np.ndarray, opts: SolverOptions | None = None) -> SolveReport:
    run = Run("m2", prob, opts or SolverOptions())

    def multiplier(run: Run, y, gy, dx) -> float:
        g_full = run.g(y + dx)
        return iwamoto_multiplier(gy, g_full)

    return _newton_loop(run, y0, multiplier)
