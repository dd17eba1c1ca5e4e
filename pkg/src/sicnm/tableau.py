"""Rosenbrock tableaux in (alpha, gamma_ij, b) form.

One step of a method with ``s`` stages on ``M x' = F(x)`` reads

    (M - h*gamma*Jac) K_i = h F(x0 + sum_j alpha_ij K_j) + h Jac sum_j gamma_ij K_j
    x1 = x0 + sum_i b_i K_i

with ``alpha`` and ``gamma_ij`` strictly lower triangular. All tableaux here
are stiffly accurate (``b_i = beta_si``) and their embedded solution is the
argument of the last stage, ``x0 + sum_i alpha_si K_i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch

RODAS3D_GAMMA = 0.57281606


@dataclass(frozen=True, eq=False)
class RosenbrockTableau:
    name: str
    gamma: float
    alpha: np.ndarray
    gamma_ij: np.ndarray
    b: np.ndarray
    b_hat: np.ndarray
    order: int
    embedded_order: int
    s: int = field(init=False)

    def __post_init__(self) -> None:
        alpha = np.asarray(self.alpha, dtype=float)
        gam = np.asarray(self.gamma_ij, dtype=float)
        b = np.asarray(self.b, dtype=float)
        b_hat = np.asarray(self.b_hat, dtype=float)
        s = len(b)
        if s < 2:
            raise ShapeMismatch("a Rosenbrock tableau needs at least two stages")
        if not self.gamma > 0:
            raise ShapeMismatch(f"gamma must be positive, got {self.gamma}")
        for nm, m in (("alpha", alpha), ("gamma_ij", gam)):
            if m.shape != (s, s):
                raise ShapeMismatch(f"{nm} has shape {m.shape}, expected ({s}, {s})")
            if np.any(np.triu(m) != 0.0):
                raise ShapeMismatch(f"{nm} must be strictly lower triangular")
        if b_hat.shape != (s,):
            raise ShapeMismatch(f"b_hat has shape {b_hat.shape}, expected ({s},)")
        for nm, v in (("alpha", alpha), ("gamma_ij", gam), ("b", b), ("b_hat", b_hat)):
            v.setflags(write=False)
            object.__setattr__(self, nm, v)
        object.__setattr__(self, "s", s)

    @property
    def beta(self) -> np.ndarray:
        """``alpha + gamma_ij`` (strictly lower part only)."""
        return self.alpha + self.gamma_ij

    @property
    def beta_full(self) -> np.ndarray:
        """``alpha + gamma_ij + gamma*I``: the matrix seen by ``y' = lambda y``."""
        return self.beta + self.gamma * np.eye(self.s)


# ---------------------------------------------------------------------------
# order conditions

_ORDER_RHS = {
    "sum_b": lambda g: 1.0,
    "b.beta'": lambda g: 0.5 - g,
    "b.alpha^2": lambda g: 1.0 / 3.0,
    "b.beta.beta'": lambda g: 1.0 / 6.0 - g + g * g,
    "b.alpha^3": lambda g: 0.25,
    "b.alpha.(alpha beta')": lambda g: 1.0 / 8.0 - g / 3.0,
    "b.beta.alpha^2": lambda g: 1.0 / 12.0 - g / 3.0,
    "b.beta.beta.beta'": lambda g: 1.0 / 24.0 - g / 2.0 + 1.5 * g * g - g**3,
}
_ORDER_OF = {
    "sum_b": 1,
    "b.beta'": 2,
    "b.alpha^2": 3,
    "b.beta.beta'": 3,
    "b.alpha^3": 4,
    "b.alpha.(alpha beta')": 4,
    "b.beta.alpha^2": 4,
    "b.beta.beta.beta'": 4,
}


def _weights_residuals(tab: RosenbrockTableau, w: np.ndarray, order: int) -> dict[str, float]:
    A, B, g = tab.alpha, tab.beta, tab.gamma
    a = A.sum(axis=1)
    bp = B.sum(axis=1)
    lhs = {
        "sum_b": w.sum(),
        "b.beta'": w @ bp,
        "b.alpha^2": w @ a**2,
        "b.beta.beta'": w @ B @ bp,
        "b.alpha^3": w @ a**3,
        "b.alpha.(alpha beta')": w @ (a * (A @ bp)),
        "b.beta.alpha^2": w @ B @ a**2,
        "b.beta.beta.beta'": w @ B @ B @ bp,
    }
    return {
        k: float(abs(lhs[k] - _ORDER_RHS[k](g))) for k in lhs if _ORDER_OF[k] <= order
    }


def check_order_conditions(tab: RosenbrockTableau) -> dict[str, float]:
    """Absolute residuals of every condition the tableau claims to satisfy.

    Covers the Rosenbrock conditions up to ``tab.order`` for ``b`` and up to
    ``tab.embedded_order`` for ``b_hat``, unit row sums of the last two alpha
    rows, and the stiff-accuracy identities ``b_i = beta_si``,
    ``alpha_si = beta_{s-1,i}`` (diagonal entries count as ``gamma``).
    """
    if not isinstance(tab, RosenbrockTableau):
        raise ShapeMismatch("expected a RosenbrockTableau")
    s = tab.s
    bf = tab.beta_full
    out = {k: v for k, v in _weights_residuals(tab, tab.b, tab.order).items()}
    out.update(
        {f"embedded {k}": v for k, v in _weights_residuals(tab, tab.b_hat, tab.embedded_order).items()}
    )
    a = tab.alpha.sum(axis=1)
    out[f"alpha_{s} row sum"] = float(abs(a[s - 1] - 1.0))
    out[f"alpha_{s - 1} row sum"] = float(abs(a[s - 2] - 1.0))
    out["stiff accuracy b = beta_s"] = float(np.max(np.abs(tab.b - bf[s - 1])))
    out["stiff accuracy alpha_s = beta_(s-1)"] = float(
        np.max(np.abs(tab.alpha[s - 1, : s - 1] - bf[s - 2, : s - 1]))
    )
    out["embedded weights = alpha_s"] = float(np.max(np.abs(tab.b_hat - tab.alpha[s - 1])))
    return out


def _stage_gains(tab: RosenbrockTableau, z: complex) -> np.ndarray | None:
    bf = tab.beta_full
    diag = 1.0 - z * tab.gamma
    if diag == 0:
        return None
    k = np.zeros(tab.s, dtype=complex)
    # (I - z B) k = z * 1 is lower triangular
    for i in range(tab.s):
        k[i] = (z + z * (bf[i, :i] @ k[:i])) / diag
    return k


def stability_function(tab: RosenbrockTableau, z: complex) -> complex:
    """``R(z)`` from one step on ``y' = lambda*y`` with ``h*lambda = z``.

    ``R(z) = 1 + z b^T (I - z B)^{-1} 1`` where ``B`` includes the diagonal
    gamma. At the pole ``z = 1/gamma`` the result is complex infinity.
    """
    k = _stage_gains(tab, complex(z))
    if k is None:
        return complex(np.inf, np.inf)
    return complex(1.0 + tab.b @ k)


def stability_function_embedded(tab: RosenbrockTableau, z: complex) -> complex:
    k = _stage_gains(tab, complex(z))
    if k is None:
        return complex(np.inf, np.inf)
    return complex(1.0 + tab.b_hat @ k)


# ---------------------------------------------------------------------------
# Rodas3d


def derive_rodas3d(gamma: float, alpha21: float, alpha31: float) -> RosenbrockTableau:
    """Solve the 4-stage order-3 stiffly accurate conditions for given free parameters.

    With ``alpha_3 = alpha_4 = 1`` and the stiff-accuracy identities, the
    remaining unknowns follow in closed form:

        c      = 1/2 - 2 gamma + gamma^2
        beta43 = (1/6 - gamma + gamma^2 - gamma c) / c
        beta42 = (1/3 - gamma - beta43) / alpha21^2
        beta21 = (c - beta43 (1 - gamma)) / beta42
        beta32 = c / beta21,  beta31 = 1 - gamma - beta32
        beta41 = 1 - gamma - beta42 - beta43
    """
    g = gamma
    c = 0.5 - 2.0 * g + g * g
    b43 = (1.0 / 6.0 - g + g * g - g * c) / c
    b42 = (1.0 / 3.0 - g - b43) / alpha21**2
    b21 = (c - b43 * (1.0 - g)) / b42
    b32 = c / b21
    b31 = 1.0 - g - b32
    b41 = 1.0 - g - b42 - b43

    alpha = np.zeros((4, 4))
    beta = np.zeros((4, 4))
    alpha[1, 0] = alpha21
    alpha[2, 0], alpha[2, 1] = alpha31, 1.0 - alpha31
    alpha[3, :3] = (b31, b32, g)
    beta[1, 0] = b21
    beta[2, :2] = (b31, b32)
    beta[3, :3] = (b41, b42, b43)
    b = np.array([b41, b42, b43, g])
    return RosenbrockTableau(
        name="rodas3d",
        gamma=g,
        alpha=alpha,
        gamma_ij=beta - alpha,
        b=b,
        b_hat=alpha[3].copy(),
        order=3,
        embedded_order=2,
    )


# frozen output of derive_rodas3d(RODAS3D_GAMMA, 0.5, 0.3)
_RODAS3D_ALPHA = np.array(
    [
        [0.0, 0.0, 0.0, 0.0],
        [0.5, 0.0, 0.0, 0.0],
        [0.3, 0.7, 0.0, 0.0],
        [-0.19839323210911697, 0.625577172109117, 0.57281606, 0.0],
    ]
)
_RODAS3D_GAMMA_IJ = np.array(
    [
        [0.0, 0.0, 0.0, 0.0],
        [-1.0075534970938704, 0.0, 0.0, 0.0],
        [-0.49839323210911696, -0.07442282789088295, 0.0, 0.0],
        [0.6023299141262037, -0.27527052590967704, -0.8998754482165265, 0.0],
    ]
)
_RODAS3D_B = np.array([0.4039366820170867, 0.35030664619943996, -0.32705938821652664, 0.57281606])


def rodas3d() -> RosenbrockTableau:
    """4 stages, order 3, embedded order 2, gamma = 0.57281606."""
    return RosenbrockTableau(
        name="rodas3d",
        gamma=RODAS3D_GAMMA,
        alpha=_RODAS3D_ALPHA.copy(),
        gamma_ij=_RODAS3D_GAMMA_IJ.copy(),
        b=_RODAS3D_B.copy(),
        b_hat=_RODAS3D_ALPHA[3].copy(),
        order=3,
        embedded_order=2,
    )


# ---------------------------------------------------------------------------
# Rodas4 (Hairer & Wanner), published in the transformed variables
# u_i = sum_j Gamma_ij K_j used by RODAS: stage arguments x0 + sum_j a_ij u_j,
# coupling c_ij, solution weights m_i.

_RODAS4_GAMMA = 0.25
_RODAS4_A = {
    (1, 0): 1.544,
    (2, 0): 0.9466785280815826, (2, 1): 0.2557011698983284,
    (3, 0): 3.314825187068521, (3, 1): 2.896124015972201, (3, 2): 0.9986419139977817,
    (4, 0): 1.221224509226641, (4, 1): 6.019134481288629, (4, 2): 12.53708332932087,
    (4, 3): -0.6878860361058950,
}
_RODAS4_C = {
    (1, 0): -5.6688,
    (2, 0): -2.430093356833875, (2, 1): -0.2063599157091915,
    (3, 0): -0.1073529058151375, (3, 1): -9.594562251023355, (3, 2): -20.47028614809616,
    (4, 0): 7.496443313967647, (4, 1): -10.24680431464352, (4, 2): -33.99990352819905,
    (4, 3): 11.70890893206160,
    (5, 0): 8.083246795921522, (5, 1): -7.981132988064893, (5, 2): -31.52159432874371,
    (5, 3): 16.31930543123136, (5, 4): -6.058818238834054,
}


def rodas4() -> RosenbrockTableau:
    """6 stages, order 4, embedded order 3, gamma = 1/4."""
    g = _RODAS4_GAMMA
    a = np.zeros((6, 6))
    c = np.zeros((6, 6))
    for (i, j), v in _RODAS4_A.items():
        a[i, j] = v
    for (i, j), v in _RODAS4_C.items():
        c[i, j] = v
    # stiffly accurate layout: stage 6 starts where stage 5 ends
    a[5, :4] = a[4, :4]
    a[5, 4] = 1.0
    m = np.array([*a[4, :4], 1.0, 1.0])

    big_gamma = np.linalg.inv(np.eye(6) / g - c)
    alpha = np.tril(a @ big_gamma, -1)
    gamma_ij = np.tril(big_gamma, -1)
    b = m @ big_gamma
    return RosenbrockTableau(
        name="rodas4",
        gamma=g,
        alpha=alpha,
        gamma_ij=gamma_ij,
        b=b,
        b_hat=alpha[5].copy(),
        order=4,
        embedded_order=3,
    )


TABLEAUX = {"rodas3d": rodas3d, "rodas4": rodas4}


def get_tableau(name: str) -> RosenbrockTableau:
    try:
        return TABLEAUX[name.lower()]()
    except KeyError:
        raise KeyError(f"unknown tableau {name!r}; known: {sorted(TABLEAUX)}") from None


def format_tableau(tab: RosenbrockTableau) -> str:
    """Plain-text table with every coefficient to 17 significant digits."""
    fmt = "{:.17g}".format
    lines = [f"{tab.name}: s={tab.s} gamma={fmt(tab.gamma)} order={tab.order}"
             f" embedded_order={tab.embedded_order}"]
    for label, mat in (("alpha", tab.alpha), ("gamma_ij", tab.gamma_ij)):
        lines.append(f"{label}:")
        for i in range(1, tab.s):
            lines.append("  " + "  ".join(f"{fmt(mat[i, j]):>24}" for j in range(i)))
    lines.append("b:     " + "  ".join(fmt(x) for x in tab.b))
    lines.append("b_hat: " + "  ".join(fmt(x) for x in tab.b_hat))
    return "\n".join(lines)
