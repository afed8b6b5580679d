import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpcert.bounding import (
    Cosine,
    ExpNeg,
    MaternPsi,
    PhiRange,
    Quadratic,
    RationalQuadraticPsi,
    SinSquared,
    bounds_vec,
    linear_bounds,
    range_vec,
)

PSIS = [
    ExpNeg(),
    ExpNeg(2.0, 0.5),
    RationalQuadraticPsi(1.0, 0.7),
    RationalQuadraticPsi(1.5, 3.0),
    MaternPsi(1.0, 0),
    MaternPsi(1.0, 1),
    MaternPsi(2.0, 2),
    Cosine(),
    -Quadratic(1.0, 0.0),
    SinSquared(1.0, 2.0, 0.3),
]


def test_degenerate_interval_gives_constant_lines():
    lb = linear_bounds(ExpNeg(), 0.0, 0.0)
    assert (lb.a_L, lb.b_L, lb.a_U, lb.b_U) == (1.0, 0.0, 1.0, 0.0)


def test_exp_tangent_and_chord():
    lb = linear_bounds(ExpNeg(), 0.0, 1.0)
    assert lb.b_L == pytest.approx(-np.exp(-0.5), abs=1e-12)
    assert lb.a_L == pytest.approx(1.5 * np.exp(-0.5), abs=1e-12)
    assert lb.b_U == pytest.approx(np.exp(-1.0) - 1.0, abs=1e-12)
    assert lb.a_U == pytest.approx(1.0, abs=1e-12)


def test_concave_square_lower_chord():
    lb = linear_bounds(-Quadratic(1.0, 0.0), -1.0, 1.0)
    assert lb.a_L == pytest.approx(-1.0)
    assert lb.b_L == pytest.approx(0.0, abs=1e-15)


def test_phi_range_rejects_empty():
    with pytest.raises(ValueError):
        PhiRange(1.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(idx=st.integers(0, len(PSIS) - 1), lo=st.floats(0.0, 6.0), width=st.floats(0.0, 6.0))
def test_lines_sandwich_psi(idx, lo, width):
    fn = PSIS[idx]
    hi = lo + width
    lb = linear_bounds(fn, lo, hi)
    t = np.linspace(lo, hi, 401)
    f = fn.f(t)
    assert np.all(lb.lower(t) <= f + 1e-9)
    assert np.all(f <= lb.upper(t) + 1e-9)


def test_vectorised_bounds_match_scalar():
    rng = np.random.default_rng(0)
    lo = rng.uniform(0, 3, 20)
    hi = lo + rng.uniform(0, 3, 20)
    for fn in PSIS:
        a_L, b_L, a_U, b_U = bounds_vec(fn, lo, hi)
        for i in range(lo.size):
            t = np.linspace(lo[i], hi[i], 101)
            assert np.all(a_L[i] + b_L[i] * t <= fn.f(t) + 1e-9)
            assert np.all(fn.f(t) <= a_U[i] + b_U[i] * t + 1e-9)


def test_range_is_exact():
    rng = np.random.default_rng(1)
    lo = rng.uniform(-2, 3, 30)
    hi = lo + rng.uniform(0, 4, 30)
    for fn in (Cosine(), SinSquared(1.0, 1.5, 0.2), MaternPsi(1.0, 1)):
        lo_ = np.maximum(lo, 0.0) if isinstance(fn, MaternPsi) else lo
        hi_ = np.maximum(hi, lo_)
        rmin, rmax = range_vec(fn, lo_, hi_)
        for i in range(lo.size):
            v = fn.f(np.linspace(lo_[i], hi_[i], 20001))
            assert rmin[i] <= v.min() + 1e-12 and v.min() - rmin[i] < 1e-6
            assert rmax[i] >= v.max() - 1e-12 and rmax[i] - v.max() < 1e-6


def test_gap_shrinks_with_interval():
    fn = MaternPsi(1.0, 1)
    prev = np.inf
    for k in range(10):
        lo, hi = 0.3, 0.3 + 2.0 / 2**k
        lb = linear_bounds(fn, lo, hi)
        t = np.linspace(lo, hi, 201)
        gap = float(np.max(lb.upper(t) - lb.lower(t)))
        assert gap <= prev + 1e-9
        prev = gap
    assert prev < 1e-5
