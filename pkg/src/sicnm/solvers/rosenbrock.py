"""Semi-implicit continuous Newton method (M8).

The power-flow ODE ``J(y) dy/dt = -g(y)`` is rewritten as the index-1 DAE

    dy/dt = z
    0     = J(y) z + g(y)

and integrated with a stiffly accurate Rosenbrock method. Per step the DAE
Jacobian is frozen at ``(y0, z0)``; its lower-left block is
``H(y0)z0 + J(y0)`` and its lower-right block ``J(y0)``, so each step costs one
n-by-n LU (see :mod:`sicnm.linalg`) and ``s`` residual evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..counters import Counters
from ..errors import NonFinite, Singular
from ..linalg import build_stage_system, lu_factorize, stage_solve
from ..pfcore import DaeState
from ..tableau import RosenbrockTableau, rodas3d
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
    eval_g,
    eval_hz,
    eval_jac,
    safe_check,
)


@dataclass
class StepResult:
    y1: np.ndarray
    z1: np.ndarray
    err_y: np.ndarray
    err_z: np.ndarray


def sicnm_step(
    prob: Problem,
    state: DaeState,
    h: float,
    tab: RosenbrockTableau,
    counters: Counters | None = None,
) -> StepResult:
    """One Rosenbrock step on the power-flow DAE from ``state``.

    Raises :class:`Singular` if the Schur block cannot be factorized.
    """
    c = counters if counters is not None else Counters()
    y0 = np.asarray(state.y, dtype=float)
    z0 = np.asarray(state.z, dtype=float)
    n = len(y0)

    j0 = eval_jac(prob, y0)
    c.j_evals += 1
    hz = eval_hz(prob, y0, z0)
    c.hz_evals += 1
    sys = build_stage_system(h, tab.gamma, hz + j0, j0, c)

    s = tab.s
    K = np.zeros((s, n))
    L = np.zeros((s, n))
    for i in range(s):
        a = tab.alpha[i, :i]
        gm = tab.gamma_ij[i, :i]
        v = y0 + a @ K[:i]
        w = z0 + a @ L[:i]
        gk = gm @ K[:i]
        gl = gm @ L[:i]

        gv = eval_g(prob, v)
        c.g_evals += 1
        if i == 0:
            jv = j0
        else:
            jv = eval_jac(prob, v)
            c.j_evals += 1

        top = h * (w + gl)
        bot = h * (jv @ w + gv + sys.j21 @ gk + sys.j22 @ gl)
        K[i], L[i] = stage_solve(sys, top, bot)

    y1 = y0 + tab.b @ K
    z1 = z0 + tab.b @ L
    err_y = np.abs(tab.b_hat @ K - tab.b @ K)
    err_z = np.abs(tab.b_hat @ L - tab.b @ L)
    return StepResult(y1, z1, err_y, err_z)


def error_ratio(err_y, err_z, y1, z1, atol: float, rtol: float) -> float:
    """Infinity norm of the scaled embedded error; a step is accepted iff <= 1."""
    err = np.concatenate([err_y, err_z])
    scale = atol + rtol * np.abs(np.concatenate([y1, z1]))
    if len(err) == 0:
        return 0.0
    return float(np.max(err / scale))


def step_size_update(
    h: float, err_y, err_z, y1, z1, opts: SolverOptions, q: int
) -> float:
    """``h * safety * ratio**(-1/q)``, growth capped at ``max_growth``, clipped to [h_min, h_max]."""
    ratio = error_ratio(err_y, err_z, y1, z1, opts.atol, opts.rtol)
    if ratio == 0.0:
        fac = opts.max_growth
    else:
        fac = min(opts.max_growth, opts.safety * ratio ** (-1.0 / q))
    return float(np.clip(h * fac, opts.h_min, opts.h_max))


def initial_rate(prob: Problem, y0: np.ndarray, counters: Counters | None = None) -> np.ndarray:
    """``z0 = -J(y0)^{-1} g(y0)``: the consistent initial value of the algebraic part."""
    c = counters if counters is not None else Counters()
    g0 = eval_g(prob, y0)
    c.g_evals += 1
    j0 = eval_jac(prob, y0)
    c.j_evals += 1
    return -lu_factorize(j0, c).solve(g0)


def sicnm_solve(
    prob: Problem,
    y0: np.ndarray,
    opts: SolverOptions | None = None,
    tab: RosenbrockTableau | None = None,
) -> SolveReport:
    tab = tab or rodas3d()
    opts = opts or SolverOptions()
    run = Run(f"m8-{tab.name}", prob, opts)
    cnt = run.counters
    y = np.array(y0, dtype=float)

    try:
        g0, err = run.check(y)
        z = -lu_factorize(run.jac(y), cnt).solve(g0)
    except NonFinite as exc:
        return run.finish(DIVERGED, y, 0, float("inf"), float("inf"), str(exc))
    except Singular as exc:
        return run.finish(SINGULAR, y, 0, err, err, str(exc))
    err0 = err
    if err <= opts.tol:
        return run.finish(CONVERGED, y, 0, err0, err)

    h = opts.h0
    accepted = 0
    attempt = 0
    max_attempts = 10 * opts.max_iter + 100
    while accepted < opts.max_iter and attempt < max_attempts:
        attempt += 1
        reason = ""
        try:
            step = sicnm_step(prob, DaeState(y, z), h, tab, cnt)
            ok = np.all(np.isfinite(step.y1)) and np.all(np.isfinite(step.z1))
            ratio = (
                error_ratio(step.err_y, step.err_z, step.y1, step.z1, opts.atol, opts.rtol)
                if ok else np.inf
            )
        except Singular as exc:
            step, ratio, reason = None, np.inf, f"singular: {exc}"
        except NonFinite as exc:
            step, ratio, reason = None, np.inf, f"non-finite: {exc}"

        new_err = np.inf
        if step is not None and ratio <= 1.0:
            _, new_err = safe_check(run, step.y1)

        if step is not None and ratio <= 1.0 and np.isfinite(new_err):
            y, z, err = step.y1, step.z1, new_err
            accepted += 1
            cnt.accepted_steps += 1
            run.trace.add(attempt, err, h, True)
            if blew_up(err):
                return run.finish(DIVERGED, y, accepted, err0, err)
            if err <= opts.tol:
                return run.finish(CONVERGED, y, accepted, err0, err)
            h = step_size_update(h, step.err_y, step.err_z, step.y1, step.z1, opts, tab.order)
            continue

        cnt.rejected_steps += 1
        run.trace.add(attempt, err, h, False)
        if h <= opts.h_min:
            status = SINGULAR if reason.startswith("singular") else MAX_ITER
            return run.finish(status, y, accepted, err0, err, reason or "step size underflow")
        if step is not None and np.isfinite(ratio) and ratio > 1.0:
            h = step_size_update(h, step.err_y, step.err_z, step.y1, step.z1, opts, tab.order)
        else:
            h = max(0.5 * h, opts.h_min)

    return run.finish(MAX_ITER, y, accepted, err0, err)

