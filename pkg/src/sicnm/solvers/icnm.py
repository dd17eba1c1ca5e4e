"""Implicit continuous Newton method: backward Euler on J(y) dy/dt = -g(y) (M7).

Each outer step solves ``r(u) = J(u)(u - y) + h g(u) = 0`` for the new
iterate ``u`` by an inner Newton loop. The variants differ only in the
matrix used for the inner corrections:

- ``JH``: exact ``H(u)(u - y) + (1 + h) J(u)``, refactorized every inner iteration
- ``J``:  ``(1 + h) J(u)``, refactorized every inner iteration
- ``J1``: ``(1 + h) J(y)``, factorized once per outer step
- ``J0``: ``(1 + h) J(y_start)``, factorized once for the whole run

Step control: double ``h`` (up to ``h_max``) after a successful inner solve,
halve and retry after a failed one.
"""

from __future__ import annotations

from typing import Literal

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
    eval_hz,
    norm_inf,
    safe_check,
)

Variant = Literal["JH", "J", "J1", "J0"]
VARIANTS = ("JH", "J", "J1", "J0")

INNER_MAX = 20
INNER_RTOL = 1e-8


def _inner_solve(run: Run, y: np.ndarray, h: float, variant: str, err_y: float, lu0):
    """Return ``(u, g(u))`` on success or ``None`` if the inner loop failed."""
    tol = INNER_RTOL * (1.0 + err_y)
    u = y.copy()
    lu_step = None
    if variant == "J1":
        lu_step = lu_factorize((1.0 + h) * run.jac(y), run.counters)

    for _ in range(INNER_MAX + 1):
        gu = run.g(u)
        ju = run.jac(u)
        r = ju @ (u - y) + h * gu
        if norm_inf(r) <= tol:
            return u, gu
        if variant == "JH":
            run.counters.hz_evals += 1
            m = eval_hz(run.prob, u, u - y) + (1.0 + h) * ju
            du = lu_factorize(m, run.counters).solve(r)
        elif variant == "J":
            du = lu_factorize((1.0 + h) * ju, run.counters).solve(r)
        elif variant == "J1":
            du = lu_step.solve(r)
        else:
            du = lu0.solve(r) / (1.0 + h)
        u = u - du
    return None


def icnm(
    prob: Problem,
    y0: np.ndarray,
    opts: SolverOptions | None = None,
    variant: Variant = "JH",
) -> SolveReport:
    if variant not in VARIANTS:
        raise ValueError(f"unknown ICNM variant {variant!r}")
    opts = opts or SolverOptions(h0=0.01)
    run = Run(f"m7-{variant.lower()}", prob, opts)
    y = np.array(y0, dtype=float)
    _, err = safe_check(run, y)
    err0 = err
    if blew_up(err):
        return run.finish(DIVERGED, y, 0, err0, err, "non-finite initial residual")
    if err <= opts.tol:
        return run.finish(CONVERGED, y, 0, err0, err)

    lu0 = None
    if variant == "J0":
        try:
            lu0 = lu_factorize(run.jac(y), run.counters)
        except Singular as exc:
            return run.finish(SINGULAR, y, 0, err0, err, str(exc))

    h = opts.h0
    accepted = 0
    attempt = 0
    max_attempts = 10 * opts.max_iter + 100
    while accepted < opts.max_iter and attempt < max_attempts:
        attempt += 1
        try:
            result = _inner_solve(run, y, h, variant, err, lu0)
        except (Singular, NonFinite):
            result = None

        if result is None:
            run.counters.rejected_steps += 1
            run.trace.add(attempt, err, h, False)
            h *= 0.5
            if h < opts.h_min:
                return run.finish(MAX_ITER, y, accepted, err0, err, "step size underflow")
            continue

        y, gy = result
        run.counters.residual_checks += 1
        err = norm_inf(gy)
        accepted += 1
        run.counters.accepted_steps += 1
        run.trace.add(attempt, err, h, True)
        if blew_up(err):
            return run.finish(DIVERGED, y, accepted, err0, err)
        if err <= opts.tol:
            return run.finish(CONVERGED, y, accepted, err0, err)
        h = min(2.0 * h, opts.h_max)

    return run.finish(MAX_ITER, y, accepted, err0, err)
