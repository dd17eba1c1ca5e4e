import numpy as np
import pytest

from sicnm.caseio import BranchRecord, BusRecord, GenRecord, NetworkCase, load_case
from sicnm.errors import NonFinite
from sicnm.pfcore import (
    build_problem,
    hessian_action,
    initial_state,
    injections,
    jacobian,
    mismatch,
    split_state,
    state_from_voltages,
)

from conftest import case_path
from oracles import bus_powers, central_jacobian, dense_ybus

CASES = ["case9", "case14", "case27ill"]


def two_bus_pq(pd=0.0, qd=0.0):
    buses = (
        BusRecord(1, 3, 0, 0, 0, 0, 1, 0, 230, 1.1, 0.9),
        BusRecord(2, 1, pd, qd, 0, 0, 1, 0, 230, 1.1, 0.9),
    )
    return NetworkCase(100.0, buses, (BranchRecord(1, 2, 0.0, 0.1, 0.0, 1.0, 0.0, 1),),
                       (GenRecord(1, 0, 0, 99, -99, 1.0, 1),))


def random_states(prob, n, seed):
    rng = np.random.default_rng(seed)
    na = prob.idx.n_angle
    for _ in range(n):
        y = np.empty(prob.n_state)
        y[:na] = rng.uniform(-0.5, 0.5, na)
        y[na:] = rng.uniform(0.85, 1.15, prob.n_state - na)
        yield y


def test_two_bus_flat_start_values():
    prob = build_problem(two_bus_pq())
    y0 = initial_state(prob, two_bus_pq())
    np.testing.assert_array_equal(mismatch(prob, y0), [0.0, 0.0])
    # dP2/dth2 = 10, dQ2/dV2 = 10 at flat start on a lossless 0.1 p.u. line
    np.testing.assert_allclose(jacobian(prob, y0).toarray(), [[10, 0], [0, 10]], atol=1e-12)


def test_two_bus_load_enters_with_minus_sign():
    case = two_bus_pq(pd=50, qd=20)
    prob = build_problem(case)
    g = mismatch(prob, initial_state(prob, case))
    np.testing.assert_allclose(g, [0.5, 0.2], atol=1e-14)


@pytest.mark.parametrize("name", CASES)
def test_mismatch_matches_loop_oracle(name):
    case = load_case(case_path(name))
    prob = build_problem(case)
    yb = dense_ybus(case)
    for y in random_states(prob, 3, 7):
        va, vm = split_state(prob, y)
        p, q = bus_powers(yb, va, vm)
        expect = np.concatenate([(p - prob.p_sched)[prob.idx.pvpq], (q - prob.q_sched)[prob.idx.pq]])
        np.testing.assert_allclose(mismatch(prob, y), expect, atol=1e-10)


@pytest.mark.parametrize("name", CASES)
def test_jacobian_matches_central_differences(name):
    prob = build_problem(load_case(case_path(name)))
    for y in random_states(prob, 10, 1):
        fd = central_jacobian(lambda u: mismatch(prob, u), y)
        assert np.max(np.abs(jacobian(prob, y).toarray() - fd)) <= 1e-6


@pytest.mark.parametrize("name", CASES)
def test_hessian_action_matches_differenced_jacobian(name):
    prob = build_problem(load_case(case_path(name)))
    rng = np.random.default_rng(2)
    for y in random_states(prob, 10, 3):
        z = rng.normal(size=prob.n_state)
        eps = 1e-6
        fd = (jacobian(prob, y + eps * z) - jacobian(prob, y - eps * z)).toarray() / (2 * eps)
        assert np.max(np.abs(hessian_action(prob, y, z).toarray() - fd)) <= 1e-5


def test_hessian_action_is_linear_in_z(prob14):
    rng = np.random.default_rng(4)
    y = next(random_states(prob14, 1, 5))
    z1, z2 = rng.normal(size=(2, prob14.n_state))
    lhs = hessian_action(prob14, y, 2.0 * z1 - 3.0 * z2).toarray()
    rhs = 2.0 * hessian_action(prob14, y, z1).toarray() - 3.0 * hessian_action(prob14, y, z2).toarray()
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_hessian_action_is_symmetric_bilinear(prob9):
    # (H z) w = (H w) z since second derivatives commute
    rng = np.random.default_rng(6)
    y = next(random_states(prob9, 1, 8))
    z, w = rng.normal(size=(2, prob9.n_state))
    np.testing.assert_allclose(hessian_action(prob9, y, z) @ w, hessian_action(prob9, y, w) @ z, atol=1e-10)


def test_hessian_action_zero_direction(prob9, flat9):
    assert np.all(hessian_action(prob9, flat9, np.zeros_like(flat9)).toarray() == 0.0)


def test_sparsity_pattern_is_stable(prob14):
    a = jacobian(prob14, np.r_[np.zeros(13), np.ones(9)])
    b = jacobian(prob14, next(random_states(prob14, 1, 9)))
    assert a.shape == b.shape == (22, 22)
    np.testing.assert_array_equal(a.indptr, b.indptr)
    np.testing.assert_array_equal(a.indices, b.indices)


def test_state_round_trip(case14, prob14):
    y = initial_state(prob14, case14, "case_values")
    va, vm = split_state(prob14, y)
    np.testing.assert_array_equal(state_from_voltages(prob14, va, vm), y)
    # PV magnitudes come from the generator setpoints
    assert vm[1] == 1.045 and vm[7] == 1.09


def test_initial_state_modes(case9, prob9):
    flat = initial_state(prob9, case9, "flat")
    np.testing.assert_array_equal(flat, np.r_[np.zeros(8), np.ones(6)])
    with pytest.raises(ValueError):
        initial_state(prob9, case9, "warm")


def test_case14_stored_voltages_nearly_solve(case14, prob14):
    # the file stores the published solution rounded to 0.001 p.u. / 0.01 deg
    y = initial_state(prob14, case14, "case_values")
    assert np.max(np.abs(mismatch(prob14, y))) < 0.05


def test_injections_balance_losses(prob9, flat9):
    s = injections(prob9, flat9)
    # flat start: only the line charging shows up, as net reactive generation
    assert abs(s.real.sum()) < 1e-12 and s.imag.sum() < 0


def test_non_finite_state_raises(prob9, flat9):
    y = flat9.copy()
    y[0] = np.nan
    with pytest.raises(NonFinite):
        mismatch(prob9, y)
    with pytest.raises(NonFinite):
        jacobian(prob9, y)
    with pytest.raises(ValueError):
        mismatch(prob9, flat9[:-1])
