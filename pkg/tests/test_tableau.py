import numpy as np
import pytest

from sicnm.errors import ShapeMismatch
from sicnm.tableau import (
    RODAS3D_GAMMA,
    RosenbrockTableau,
    check_order_conditions,
    derive_rodas3d,
    format_tableau,
    get_tableau,
    rodas3d,
    rodas4,
    stability_function,
    stability_function_embedded,
)

from oracles import fitted_slope, prothero_robinson_error


def closed_form_r(g, z):
    num = 1 + (1 - 4 * g) * z + (6 * g**2 - 4 * g + 0.5) * z**2 + (-4 * g**3 + 6 * g**2 - 2 * g + 1 / 6) * z**3
    return num / (g * z - 1) ** 4


@pytest.mark.parametrize("factory", [rodas3d, rodas4])
def test_all_claimed_conditions_hold(factory):
    res = check_order_conditions(factory())
    assert max(res.values()) <= 1e-12, res


def test_rodas3d_shape_and_gamma():
    t = rodas3d()
    assert (t.s, t.order, t.embedded_order, t.gamma) == (4, 3, 2, 0.57281606)
    np.testing.assert_array_equal(t.b_hat, t.alpha[3])
    assert t.b[-1] == t.gamma


def test_derivation_reproduces_frozen_coefficients():
    d = derive_rodas3d(RODAS3D_GAMMA, 0.5, 0.3)
    t = rodas3d()
    for name in ("alpha", "gamma_ij", "b", "b_hat"):
        np.testing.assert_allclose(getattr(d, name), getattr(t, name), rtol=0, atol=1e-15)


@pytest.mark.parametrize("a21,a31", [(0.4, 0.2), (0.8, 0.5), (1.0, 0.0)])
def test_derivation_satisfies_conditions_for_other_free_parameters(a21, a31):
    assert max(check_order_conditions(derive_rodas3d(RODAS3D_GAMMA, a21, a31)).values()) < 1e-12


def test_stability_matches_closed_form():
    t = rodas3d()
    rng = np.random.default_rng(0)
    zs = rng.normal(scale=5, size=100) + 1j * rng.normal(scale=5, size=100)
    for z in zs:
        r = closed_form_r(t.gamma, z)
        assert abs(stability_function(t, z) - r) <= 1e-10 * abs(r)


@pytest.mark.parametrize("factory", [rodas3d, rodas4])
def test_hyper_stability(factory):
    t = factory()
    for z in (-1e8, 1e8, 1e8j, -1e8j):
        assert abs(stability_function(t, z)) <= 1e-5


def test_stability_near_origin_follows_exponential():
    for t in (rodas3d(), rodas4()):
        for z in (1e-3, -1e-3, 1e-3j):
            assert abs(stability_function(t, z) - np.exp(z)) < 10 * abs(z) ** (t.order + 1)
            assert abs(stability_function_embedded(t, z) - np.exp(z)) < 10 * abs(z) ** (t.embedded_order + 1)


def test_pole_at_inverse_gamma():
    t = rodas3d()
    assert not np.isfinite(abs(stability_function(t, 1 / t.gamma)))


def test_perturbed_weights_are_detected():
    t = rodas3d()
    b = t.b.copy()
    b[1] += 1e-3
    bad = RosenbrockTableau("bad", t.gamma, t.alpha, t.gamma_ij, b, t.b_hat, 3, 2)
    res = check_order_conditions(bad)
    assert res["sum_b"] == pytest.approx(1e-3, rel=1e-9)
    assert max(res.values()) >= 1e-3 - 1e-15


def test_construction_checks():
    t = rodas3d()
    with pytest.raises(ShapeMismatch):
        RosenbrockTableau("x", t.gamma, t.alpha[:3, :3], t.gamma_ij, t.b, t.b_hat, 3, 2)
    with pytest.raises(ShapeMismatch):
        RosenbrockTableau("x", t.gamma, t.alpha.T, t.gamma_ij, t.b, t.b_hat, 3, 2)
    with pytest.raises(ShapeMismatch):
        RosenbrockTableau("x", -1.0, t.alpha, t.gamma_ij, t.b, t.b_hat, 3, 2)
    with pytest.raises(ShapeMismatch):
        RosenbrockTableau("x", 0.5, np.zeros((1, 1)), np.zeros((1, 1)), [1.0], [1.0], 1, 0)
    with pytest.raises(ShapeMismatch):
        check_order_conditions("rodas3d")


def test_coefficients_are_read_only():
    t = rodas3d()
    with pytest.raises(ValueError):
        t.b[0] = 1.0


def test_lookup_and_formatting():
    assert get_tableau("RODAS4").s == 6
    with pytest.raises(KeyError):
        get_tableau("rodas5")
    text = format_tableau(rodas3d())
    assert "gamma=0.572816" in text and "b_hat" in text


@pytest.mark.parametrize("factory,order,emb", [(rodas3d, 3, 2), (rodas4, 4, 3)])
def test_classical_convergence_orders_on_nonstiff_problem(factory, order, emb):
    t = factory()
    hs = [0.1 / 2**k for k in range(5)]
    main = fitted_slope(hs, [prothero_robinson_error(t, -1.0, h) for h in hs])
    sub = fitted_slope(hs, [prothero_robinson_error(t, -1.0, h, embedded=True) for h in hs])
    assert abs(main - order) <= 0.1
    assert abs(sub - emb) <= 0.1
