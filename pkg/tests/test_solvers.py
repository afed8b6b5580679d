import numpy as np
import pytest

from gpcert.solvers import (
    box_qp,
    dual_lower_bound,
    jacobi_eigh,
    qp_certificate,
    simplex,
    solve_lp,
    solve_qp,
    sym_eigh,
)


@pytest.mark.parametrize("method", ["highs", "simplex"])
def test_lp_examples(method):
    res = solve_lp([1.0], None, None, [0.0], [1.0], method=method)
    assert res.status == "optimal" and res.fun == pytest.approx(0.0)
    res = solve_lp([1.0, 1.0], [[-1.0, -1.0]], [-1.0], [0, 0], [1, 1], method=method)
    assert res.fun == pytest.approx(1.0)


@pytest.mark.parametrize("method", ["highs", "simplex"])
def test_lp_infeasible_and_unbounded(method):
    res = solve_lp([1.0], [[1.0]], [-1.0], [0.0], [1.0], method=method)
    assert res.status == "infeasible"
    res = solve_lp([-1.0], None, None, [0.0], [np.inf], method=method)
    assert res.status == "unbounded"


def test_simplex_agrees_with_highs():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n, m = int(rng.integers(2, 8)), int(rng.integers(1, 8))
        c = rng.normal(size=n)
        G = rng.normal(size=(m, n))
        lb, ub = -rng.uniform(0.5, 2, n), rng.uniform(0.5, 2, n)
        h = G @ rng.uniform(lb, ub) + rng.uniform(0, 1, m)
        a = solve_lp(c, G, h, lb, ub, method="highs")
        b = simplex(c, G, h, lb, ub)
        assert a.fun == pytest.approx(b.fun, abs=1e-9)
        assert a.certified <= a.fun + 1e-12
        assert a.certified >= a.fun - 1e-7


def test_dual_bound_is_weak_duality():
    rng = np.random.default_rng(1)
    c = rng.normal(size=3)
    G = rng.normal(size=(2, 3))
    lb, ub = -np.ones(3), np.ones(3)
    h = G @ np.zeros(3) + 1.0
    opt = solve_lp(c, G, h, lb, ub).fun
    for _ in range(20):
        assert dual_lower_bound(c, G, h, lb, ub, rng.uniform(0, 3, 2)) <= opt + 1e-12


def test_qp_examples():
    res = solve_qp(np.array([[2.0]]), np.zeros(1), None, None, [1.0], [2.0])
    assert res.fun == pytest.approx(1.0, abs=1e-9)
    assert res.x[0] == pytest.approx(1.0, abs=1e-9)
    res = solve_qp(2 * np.eye(2), np.zeros(2), [[-1.0, -1.0]], [-1.0], [0, 0], [1, 1])
    assert res.fun == pytest.approx(0.5, abs=1e-9)
    np.testing.assert_allclose(res.x, [0.5, 0.5], atol=1e-8)
    assert res.kkt_residual <= 1e-8
    assert res.certified <= res.fun + 1e-12


def test_qp_interior_minimum_has_zero_gradient():
    P = np.array([[2.0, 0.5], [0.5, 1.0]])
    q = np.array([-0.3, 0.2])
    res = solve_qp(P, q, None, None, [-5, -5], [5, 5])
    assert np.abs(P @ res.x + q).max() <= 1e-8


def test_qp_certificate_is_a_lower_bound():
    rng = np.random.default_rng(2)
    for _ in range(10):
        B = rng.normal(size=(3, 3))
        P, q = B @ B.T, rng.normal(size=3)
        lb, ub = -np.ones(3), np.ones(3)
        G, h = rng.normal(size=(1, 3)), np.array([0.5])
        res = solve_qp(P, q, G, h, lb, ub)
        # certificate taken at a perturbed point stays below the optimum
        cert = qp_certificate(P, q, G, h, lb, ub, res.x + 0.05 * rng.normal(size=3))
        assert cert <= res.fun + 1e-9


def test_box_qp():
    S = np.array([[2.0, 0.3], [0.3, 1.0]])
    lower, val, r = box_qp(S, np.array([0.5, -1.0]), np.array([1.0, 1.0]))
    assert lower <= val + 1e-12
    Z = np.stack(np.meshgrid(np.linspace(0.5, 1, 200), np.linspace(-1, 1, 200)), -1).reshape(-1, 2)
    assert val <= np.einsum("ij,jk,ik->i", Z, S, Z).min() + 1e-9


def test_jacobi_matches_lapack():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(12, 12))
    S = A @ A.T
    w, V = jacobi_eigh(S)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(S), rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(V @ np.diag(w) @ V.T, S, atol=1e-9)
    np.testing.assert_allclose(V.T @ V, np.eye(12), atol=1e-10)
    w2, _ = sym_eigh(S)
    np.testing.assert_allclose(w2, w, atol=1e-10)


def test_jacobi_rejects_asymmetric():
    with pytest.raises(ValueError):
        jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))
