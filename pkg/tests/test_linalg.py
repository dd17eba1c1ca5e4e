import numpy as np
import pytest
import scipy.sparse as sp

from sicnm.caseio import load_case
from sicnm.counters import Counters
from sicnm.errors import NonFinite, ShapeMismatch, Singular
from sicnm.linalg import (
    build_stage_system,
    dense_stage_matrix,
    lu_factorize,
    stage_solve,
)
from sicnm.pfcore import build_problem, hessian_action, jacobian

from conftest import case_path


def test_lu_small_system():
    a = sp.csr_matrix([[4.0, 1.0], [2.0, 3.0]])
    x = lu_factorize(a).solve(np.array([1.0, 2.0]))
    np.testing.assert_allclose(x, [0.1, 0.6], atol=1e-15)


def test_lu_random_sparse_residual():
    rng = np.random.default_rng(0)
    a = sp.random(50, 50, density=0.1, random_state=1, format="csr") + sp.eye(50) * 5
    b = rng.normal(size=50)
    x = lu_factorize(a).solve(b)
    assert np.linalg.norm(a @ x - b) / np.linalg.norm(b) < 1e-12


def test_lu_singular_and_shape_errors():
    with pytest.raises(Singular):
        lu_factorize(sp.csr_matrix([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(Singular):
        lu_factorize(sp.csr_matrix((3, 3)))
    with pytest.raises(ShapeMismatch):
        lu_factorize(sp.csr_matrix(np.ones((2, 3))))
    with pytest.raises(NonFinite):
        lu_factorize(sp.csr_matrix([[np.inf, 0.0], [0.0, 1.0]]))


def test_lu_empty_system():
    assert lu_factorize(sp.csr_matrix((0, 0))).solve(np.zeros(0)).shape == (0,)


def test_lu_counter_counts_attempts():
    c = Counters()
    lu_factorize(sp.eye(3, format="csr"), c)
    with pytest.raises(Singular):
        lu_factorize(sp.csr_matrix((2, 2)), c)
    assert c.lu_facts == 2


def test_schur_solve_matches_dense_4x4():
    rng = np.random.default_rng(3)
    j21 = sp.csr_matrix(rng.normal(size=(2, 2)))
    j22 = sp.csr_matrix(rng.normal(size=(2, 2)) + 3 * np.eye(2))
    h, g = 0.3, 0.57281606
    sys = build_stage_system(h, g, j21, j22)
    rt, rb = rng.normal(size=(2, 2))
    k, l = stage_solve(sys, rt, rb)
    ref = np.linalg.solve(dense_stage_matrix(h, g, j21, j22), np.r_[rt, rb])
    np.testing.assert_allclose(np.r_[k, l], ref, rtol=1e-12, atol=1e-14)


def test_dense_stage_matrix_layout():
    j21 = sp.csr_matrix([[1.0]])
    j22 = sp.csr_matrix([[2.0]])
    m = dense_stage_matrix(0.5, 0.5, j21, j22)
    np.testing.assert_allclose(m, [[1.0, -0.25], [-0.25, -0.5]])


@pytest.mark.parametrize("name", ["case9", "case27ill"])
def test_schur_solve_matches_dense_on_networks(name):
    prob = build_problem(load_case(case_path(name)))
    rng = np.random.default_rng(11)
    n = prob.n_state
    y = np.r_[rng.uniform(-0.3, 0.3, prob.idx.n_angle), rng.uniform(0.9, 1.1, n - prob.idx.n_angle)]
    z = rng.normal(size=n)
    j = jacobian(prob, y)
    j21 = hessian_action(prob, y, z) + j
    sys = build_stage_system(0.2, 0.57281606, j21, j)
    dense = dense_stage_matrix(0.2, 0.57281606, j21, j)
    for _ in range(20):
        rt, rb = rng.normal(size=(2, n))
        k, l = stage_solve(sys, rt, rb)
        ref = np.linalg.solve(dense, np.r_[rt, rb])
        assert np.linalg.norm(np.r_[k, l] - ref) / np.linalg.norm(ref) <= 1e-9


def test_small_h_limit():
    # as h -> 0: k -> r_top and J22 l ~ -r_bot/(h g)
    j21 = sp.csr_matrix([[1.0, 0.5], [0.0, 2.0]])
    j22 = sp.csr_matrix([[3.0, 0.0], [1.0, 4.0]])
    h, g = 1e-9, 0.5
    rt = np.array([1.0, -1.0])
    rb = np.array([2.0, 1.0]) * h * g
    k, l = stage_solve(build_stage_system(h, g, j21, j22), rt, rb)
    np.testing.assert_allclose(k, rt, atol=1e-8)
    np.testing.assert_allclose(l, np.linalg.solve(j22.toarray(), -(np.array([2.0, 1.0]) + j21 @ rt)), rtol=1e-6)


def test_one_factorization_per_system():
    c = Counters()
    sys = build_stage_system(0.1, 0.5, sp.eye(3, format="csr"), sp.eye(3, format="csr"), c)
    for _ in range(5):
        stage_solve(sys, np.ones(3), np.ones(3))
    assert c.lu_facts == 1


def test_stage_system_input_checks():
    e = sp.eye(2, format="csr")
    with pytest.raises(ValueError):
        build_stage_system(0.0, 0.5, e, e)
    with pytest.raises(ShapeMismatch):
        build_stage_system(0.1, 0.5, e, sp.eye(3, format="csr"))
    sys = build_stage_system(0.1, 0.5, e, e)
    with pytest.raises(NonFinite):
        stage_solve(sys, np.array([np.nan, 0.0]), np.zeros(2))
