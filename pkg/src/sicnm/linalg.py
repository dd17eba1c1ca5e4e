"""Sparse LU handle and the block elimination for Rosenbrock stage systems.

The stage matrix of the power-flow DAE is

    E = M - h*gamma*Jt = [[ I,            -h*gamma*I  ],
                          [-h*gamma*J21,  -h*gamma*J22]]

with ``J21 = H(y0)z0 + J(y0)`` and ``J22 = J(y0)``. Eliminating the top block
row gives ``k = r_top + h*gamma*l`` and

    (h*gamma*J21 + J22) l = -(r_bot / (h*gamma) + J21 r_top)

so only the n-by-n matrix ``h*gamma*J21 + J22`` is ever factorized and E is
never formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .counters import Counters
from .errors import NonFinite, ShapeMismatch, Singular


class LuFactors:
    """Reusable sparse LU factorization (SuperLU, COLAMD ordering)."""

    def __init__(self, a: sp.spmatrix) -> None:
        a = sp.csc_matrix(a, dtype=float)
        if a.shape[0] != a.shape[1]:
            raise ShapeMismatch(f"cannot factorize a {a.shape} matrix")
        self.n = a.shape[0]
        if self.n == 0:
            self._lu = None
            return
        if not np.all(np.isfinite(a.data)):
            raise NonFinite("matrix to factorize contains NaN or Inf")
        try:
            self._lu = spla.splu(a, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise Singular(str(exc)) from None
        udiag = self._lu.U.diagonal()
        if np.any(udiag == 0.0) or not np.all(np.isfinite(udiag)):
            raise Singular("zero pivot in LU factorization")

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self._lu is None:
            return b.copy()
        x = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise Singular("LU solve produced NaN or Inf")
        return x


def lu_factorize(a: sp.spmatrix, counters: Counters | None = None) -> LuFactors:
    # attempts count, including ones that end in Singular
    if counters is not None:
        counters.lu_facts += 1
    return LuFactors(a)


@dataclass(eq=False)
class StageSystem:
    h: float
    gamma: float
    j21: sp.csr_matrix
    j22: sp.csr_matrix
    schur: sp.csr_matrix
    schur_lu: LuFactors


def build_stage_system(
    h: float,
    gamma: float,
    j21: sp.spmatrix,
    j22: sp.spmatrix,
    counters: Counters | None = None,
) -> StageSystem:
    if not (h > 0 and gamma > 0):
        raise ValueError("h and gamma must be positive")
    if j21.shape != j22.shape or j21.shape[0] != j21.shape[1]:
        raise ShapeMismatch(f"blocks have shapes {j21.shape} and {j22.shape}")
    j21 = sp.csr_matrix(j21)
    j22 = sp.csr_matrix(j22)
    schur = sp.csr_matrix(h * gamma * j21 + j22)
    return StageSystem(h, gamma, j21, j22, schur, lu_factorize(schur, counters))


def stage_solve(
    sys: StageSystem, rhs_top: np.ndarray, rhs_bot: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Solve ``E [k; l] = [rhs_top; rhs_bot]`` with the stored Schur factors."""
    hg = sys.h * sys.gamma
    rhs_top = np.asarray(rhs_top, dtype=float)
    rhs_bot = np.asarray(rhs_bot, dtype=float)
    if not (np.all(np.isfinite(rhs_top)) and np.all(np.isfinite(rhs_bot))):
        raise NonFinite("stage right-hand side contains NaN or Inf")
    l = sys.schur_lu.solve(-(rhs_bot / hg + sys.j21 @ rhs_top))
    k = rhs_top + hg * l
    return k, l


def dense_stage_matrix(h: float, gamma: float, j21, j22) -> np.ndarray:
    """The full 2n-by-2n ``M - h*gamma*Jt``; for testing and diagnostics only."""
    j21 = sp.csr_matrix(j21).toarray()
    j22 = sp.csr_matrix(j22).toarray()
    n = j21.shape[0]
    eye = np.eye(n)
    return np.block([[eye, -h * gamma * eye], [-h * gamma * j21, -h * gamma * j22]])
