import numpy as np
import pytest

from builders import FAMILIES, random_kernel
from gpcert.kernels import (
    CosineKernel,
    KernelBound,
    Periodic,
    Product,
    SquaredExponential,
    Sum,
    build_lbf_ubf,
    compose_bounds_product,
    compose_bounds_sum,
    eval_kernel,
    kernel_from_dict,
    phi_range,
    spectral_nonstationary,
    spectral_stationary,
    upper_bounding_U,
)

ALL_FAMILIES = FAMILIES + ("spectral", "spectral_ns")


def make(rng, d, family):
    if family == "spectral":
        return spectral_stationary(1.0, rng.uniform(0.3, 2, (2, d)), rng.normal(size=(2, d)))
    if family == "spectral_ns":
        return spectral_nonstationary([0.7, 0.5], rng.uniform(0.1, 0.5, (2, d)),
                                      rng.normal(size=(2, d)), rng.normal(size=(2, d)))
    return random_kernel(rng, d, family)


def test_se_values():
    k = SquaredExponential(1.0, [1.0])
    assert eval_kernel(k, [0.0], [0.0]) == 1.0
    assert eval_kernel(k, [0.0], [1.0]) == pytest.approx(np.exp(-1.0), abs=1e-15)


def test_sum_of_equal_kernels_is_the_kernel():
    k = SquaredExponential(1.3, [0.7, 2.0])
    s = Sum([k, SquaredExponential(1.3, [0.7, 2.0])], [0.5, 0.5])
    rng = np.random.default_rng(0)
    A, B = rng.normal(size=(5, 2)), rng.normal(size=(4, 2))
    np.testing.assert_allclose(s(A, B), k(A, B), atol=1e-15)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        eval_kernel(SquaredExponential(1.0, [1.0, 1.0]), [0.0], [0.0])


@pytest.mark.parametrize("family", ALL_FAMILIES)
def test_symmetry_and_stationary_diagonal(family):
    rng = np.random.default_rng(1)
    k = make(rng, 2, family)
    A, B = rng.normal(size=(6, 2)), rng.normal(size=(6, 2))
    np.testing.assert_allclose(k(A, B), k(B, A).T, atol=1e-12)
    np.testing.assert_allclose(k.diag(A), np.diag(k(A, A)), atol=1e-12)


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        SquaredExponential(1.0, [0.0])
    with pytest.raises(ValueError):
        SquaredExponential(-1.0, [1.0])
    with pytest.raises(ValueError):
        Sum([SquaredExponential(1.0, [1.0])], [-0.5])


def test_phi_range_examples():
    k1 = SquaredExponential(1.0, [1.0])
    r = phi_range(k1, [0.0], ([-1.0], [1.0]))
    assert (r.phi_L, r.phi_U) == (0.0, 1.0)
    r = phi_range(k1, [0.0], ([2.0], [3.0]))
    assert (r.phi_L, r.phi_U) == (4.0, 9.0)
    r = phi_range(SquaredExponential(1.0, [1.0, 1.0]), [0.0, 0.0], ([0.0, 0.0], [1.0, 1.0]))
    assert (r.phi_L, r.phi_U) == (0.0, 2.0)


def test_lbf_ubf_on_point_region():
    lb = build_lbf_ubf(SquaredExponential(1.0, [1.0]), [0.0], ([0.0], [0.0]))
    assert (lb.a_L, lb.b_L, lb.a_U, lb.b_U) == (1.0, 0.0, 1.0, 0.0)


def test_upper_bounding_examples():
    k = SquaredExponential(1.0, [1.0])
    assert upper_bounding_U(k, [1.0], [[0.0]], ([-1.0], [1.0])) == pytest.approx(1.0)
    assert upper_bounding_U(k, [-1.0], [[0.0]], ([-1.0], [1.0])) == pytest.approx(0.0, abs=1e-12)
    assert upper_bounding_U(k, [1.0, 1.0], [[0.0], [2.0]], ([0.0], [1.0])) == pytest.approx(4.0)
    assert upper_bounding_U(k, [], np.zeros((0, 1)), ([0.0], [1.0])) == 0.0


@pytest.mark.parametrize("family", ALL_FAMILIES)
def test_sandwich_on_random_regions(family):
    rng = np.random.default_rng(hash(family) % 2**32)
    for _ in range(5):
        d = int(rng.integers(1, 4))
        k = make(rng, d, family)
        A = rng.uniform(-2, 2, (4, d))
        lo = rng.uniform(-1.5, 1, d)
        hi = lo + rng.uniform(0, 1.0, d)
        kb = k.bound(A, lo, hi)
        Xs = lo + rng.random((1000, d)) * (hi - lo)
        vals = k(Xs, A)
        phis = k.leaf_values(Xs, A)
        assert np.all(kb.lower(phis) <= vals + 1e-9)
        assert np.all(vals <= kb.upper(phis) + 1e-9)
        assert np.all(kb.v_lo <= vals.min(axis=0) + 1e-9)
        assert np.all(vals.max(axis=0) <= kb.v_hi + 1e-9)


@pytest.mark.parametrize("family", ALL_FAMILIES)
def test_sup_is_sound(family):
    rng = np.random.default_rng(7 + len(family))
    for _ in range(5):
        d = int(rng.integers(1, 3))
        k = make(rng, d, family)
        A = rng.uniform(-1.5, 1.5, (5, d))
        lo = rng.uniform(-1, 0.5, d)
        hi = lo + rng.uniform(0.1, 1.0, d)
        C = rng.normal(size=(5, len(k.leaves())))
        U, _ = k.sup_leaves(C, A, lo, hi)
        pts = np.stack([g.ravel() for g in np.meshgrid(*[np.linspace(l, h, 100) for l, h in zip(lo, hi)],
                                                        indexing="ij")], axis=1)
        grid_max = np.einsum("nik,ik->n", k.leaf_values(pts, A), C).max()
        assert U >= grid_max - 1e-9


def test_sup_exact_for_se_in_one_dimension():
    rng = np.random.default_rng(3)
    k = SquaredExponential(1.0, [1.7])
    for _ in range(20):
        A = rng.uniform(-2, 2, (4, 1))
        c = rng.normal(size=4)
        x = np.linspace(-0.5, 0.8, 10**4)[:, None]
        grid_max = (k.leaf_values(x, A)[..., 0] @ c).max()
        U = upper_bounding_U(k, c, A, ([-0.5], [0.8]))
        assert grid_max - 1e-12 <= U <= grid_max + 1e-6


@pytest.mark.parametrize("family", ["se", "matern", "periodic", "product"])
def test_gap_shrinks_with_region(family):
    rng = np.random.default_rng(11)
    d = 2
    k = make(rng, d, family)
    A = rng.uniform(-1, 1, (3, d))
    c = rng.uniform(-0.5, 0.5, d)
    gaps = []
    for level in range(9):
        w = 0.8 / 2**level
        lo, hi = c - w, c + w
        kb = k.bound(A, lo, hi)
        Xs = lo + rng.random((500, d)) * (hi - lo)
        phis = k.leaf_values(Xs, A)
        gaps.append(float(np.max(kb.upper(phis) - kb.lower(phis))))
    assert all(b <= a + 1e-9 for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-3 * max(gaps[0], 1e-12) + 1e-9


def _constant_bound(lo, hi):
    return KernelBound(np.array([lo]), np.zeros((1, 1)), np.array([hi]), np.zeros((1, 1)),
                       np.array([lo]), np.array([hi]))


def test_compose_sum_identity_and_zero():
    rng = np.random.default_rng(4)
    k = SquaredExponential(1.0, [1.0])
    A = rng.normal(size=(3, 1))
    kb = k.bound(A, [0.0], [1.0])
    same = compose_bounds_sum([kb, kb], [1.0, 0.0])
    phis = k.leaf_values(np.linspace(0, 1, 7)[:, None], A)
    both = np.concatenate([phis, phis], axis=-1)
    np.testing.assert_allclose(same.lower(both), kb.lower(phis))
    zero = compose_bounds_sum([kb, kb], [0.0, 0.0])
    assert np.all(zero.a_L == 0) and np.all(zero.B_U == 0)
    with pytest.raises(ValueError):
        compose_bounds_sum([kb], [-1.0])


def test_compose_product_constant_factors():
    one = _constant_bound(1.0, 1.0)
    p = compose_bounds_product(one, one)
    assert p.v_lo[0] == 1.0 and p.v_hi[0] == 1.0
    assert p.a_L[0] == pytest.approx(1.0) and p.a_U[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        compose_bounds_product(_constant_bound(1.0, 0.0), one)


def test_mccormick_lower_envelope_at_midpoint():
    # L'' k' + L' k'' - L' L'' with both factors in [0, 1]
    unit = KernelBound(np.array([0.0]), np.ones((1, 1)), np.array([0.0]), np.ones((1, 1)),
                       np.array([0.0]), np.array([1.0]))
    p = compose_bounds_product(unit, unit)
    assert p.lower(np.full((1, 1, 2), 0.5))[0, 0] == 0.0 <= 0.25


def test_product_sandwich_se_times_periodic():
    rng = np.random.default_rng(5)
    k = Product(SquaredExponential(1.0, [1.0, 0.5]), Periodic(1.0, [0.7, 1.2], [1.0, 2.0]))
    A = rng.uniform(0, 1, (4, 2))
    kb = k.bound(A, np.zeros(2), np.ones(2))
    Xs = rng.random((1000, 2))
    vals, phis = k(Xs, A), k.leaf_values(Xs, A)
    assert np.all(kb.lower(phis) <= vals + 1e-9) and np.all(vals <= kb.upper(phis) + 1e-9)


def test_nonstationary_cosine_kernel():
    k = CosineKernel([1.0], [2.0])
    assert eval_kernel(k, [0.3], [0.1]) == pytest.approx(np.cos(0.3 - 0.2))
    assert not k.stationary


@pytest.mark.parametrize("family", ALL_FAMILIES)
def test_dict_round_trip(family):
    rng = np.random.default_rng(6)
    k = make(rng, 2, family)
    k2 = kernel_from_dict(k.to_dict())
    A = rng.normal(size=(5, 2))
    np.testing.assert_array_equal(k(A, A), k2(A, A))


def test_unknown_family():
    with pytest.raises(ValueError):
        kernel_from_dict({"family": "nope"})
