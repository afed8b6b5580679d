"""Kernels with bounded decompositions.

Every kernel is a tree whose leaves are *elementary* kernels
``psi(phi(x, x'))`` with a separable inner function ``phi``.  Over a box
``[lo, hi]`` and for a set of anchor points ``A`` each kernel produces a
:class:`KernelBound`: per anchor, an affine lower and upper bound on the
kernel value in terms of the leaf ``phi`` values, together with an interval
enclosure of the value itself.

Three inner functions cover all supported families:

* ``SqDist``  -- ``sum_j theta_j (x_j - a_j)^2``   (SE, RQ, Matern)
* ``SinSq``   -- ``sum_j theta_j sin^2(p_j (x_j - a_j))``   (periodic)
* ``Linear``  -- ``sum_j w_j x_j - v_j a_j``   (cosine and exp-linear factors)

For each of them ``sup_x sum_i c_i phi(x, a_i)`` over a box is computed
exactly, dimension by dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounding import (
    Cosine,
    ExpNeg,
    ExpPos,
    Fn1D,
    LinearBoundPair,
    MaternPsi,
    PhiRange,
    RationalQuadraticPsi,
    SinSquared,
    bounds_vec,
    linear_bounds,
    range_vec,
)

__all__ = [
    "KernelBound",
    "Kernel",
    "SquaredExponential",
    "RationalQuadratic",
    "Matern",
    "Periodic",
    "CosineKernel",
    "ExpLinear",
    "Sum",
    "Product",
    "spectral_stationary",
    "spectral_nonstationary",
    "eval_kernel",
    "phi_range",
    "build_lbf_ubf",
    "upper_bounding_U",
    "compose_bounds_sum",
    "compose_bounds_product",
    "kernel_from_dict",
]

# Relative slack added to computed suprema to absorb rounding.
_SUP_SLACK = 1e-12


def _as2d(X, d=None):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if d is not None and X.shape[1] != d:
        raise ValueError(f"expected points of dimension {d}, got {X.shape[1]}")
    return X


def _positive(name, v):
    v = np.asarray(v, dtype=float)
    if np.any(~np.isfinite(v)) or np.any(v <= 0):
        raise ValueError(f"{name} must be strictly positive, got {v}")
    return v


# ---------------------------------------------------------------------------
# Inner functions phi
# ---------------------------------------------------------------------------


class Leaf:
    """Separable inner function ``phi(x, a) = sum_j phi_j(x_j, a_j)``."""

    exact_linear = False
    stationary = True

    def __init__(self, d: int):
        self.d = d

    def value(self, X, A):
        raise NotImplementedError

    def self_value(self, X):
        """``phi(x, x)`` for each row of ``X``."""
        return np.array([self.value(x[None, :], x[None, :])[0, 0] for x in X])

    def coord_ranges(self, lo, hi, A):
        """Per anchor and dimension range of ``phi_j`` over ``[lo_j, hi_j]``."""
        raise NotImplementedError

    def coord_lines(self, lo, hi, A):
        """Lines in ``x_j`` sandwiching ``phi_j``; arrays ``(a_L, b_L, a_U, b_U)``."""
        raise NotImplementedError

    def sup(self, c, A, lo, hi):
        """``(U, argmax)`` with ``U >= sup_x sum_i c_i phi(x, A_i)`` over the box."""
        raise NotImplementedError

    def self_range(self, lo, hi):
        """Range of ``phi(x, x)`` for ``x`` in the box."""
        return 0.0, 0.0

    def phi_range(self, lo, hi, A):
        clo, chi = self.coord_ranges(lo, hi, A)
        return clo.sum(axis=1), chi.sum(axis=1)


class SqDist(Leaf):
    def __init__(self, theta):
        self.theta = _positive("lengthscale parameter theta", np.atleast_1d(theta))
        super().__init__(self.theta.size)

    def value(self, X, A):
        diff = X[:, None, :] - A[None, :, :]
        return np.einsum("nmj,j->nm", diff * diff, self.theta)

    def self_value(self, X):
        return np.zeros(X.shape[0])

    def coord_ranges(self, lo, hi, A):
        dlo = lo[None, :] - A
        dhi = hi[None, :] - A
        sqlo, sqhi = dlo * dlo, dhi * dhi
        inside = (dlo <= 0.0) & (dhi >= 0.0)
        rmin = np.where(inside, 0.0, np.minimum(sqlo, sqhi))
        rmax = np.maximum(sqlo, sqhi)
        return rmin * self.theta, rmax * self.theta

    def coord_lines(self, lo, hi, A):
        th = self.theta[None, :]
        mid = 0.5 * (lo + hi)[None, :]
        width = (hi - lo)[None, :]
        dm = mid - A
        b_L = 2.0 * th * dm
        a_L = th * dm * dm - b_L * mid
        b_U = th * (hi[None, :] + lo[None, :] - 2.0 * A)
        a_U = th * (lo[None, :] - A) ** 2 - b_U * lo[None, :]
        flat = np.broadcast_to(width <= 0.0, A.shape)
        b_U = np.where(flat, b_L, b_U)
        a_U = np.where(flat, a_L, a_U)
        return a_L, b_L, a_U, b_U

    def sup(self, c, A, lo, hi):
        c = np.asarray(c, dtype=float)
        total, arg = 0.0, np.empty(self.d)
        for j in range(self.d):
            cands = [lo[j], hi[j]]
            C = c.sum()
            if C < 0.0:
                vert = float(c @ A[:, j]) / C
                if lo[j] < vert < hi[j]:
                    cands.append(vert)
            cands = np.asarray(cands)
            vals = self.theta[j] * ((cands[:, None] - A[None, :, j]) ** 2 @ c)
            k = int(np.argmax(vals))
            scale = self.theta[j] * float(np.abs(c) @ ((np.abs(A[:, j]) + np.abs(cands).max()) ** 2))
            total += float(vals[k]) + _SUP_SLACK * scale
            arg[j] = cands[k]
        return total, arg


def _contains_lattice(u0, u1, offset, step):
    """Elementwise: does ``[u0, u1]`` contain some ``offset + k*step``?"""
    return np.floor((u1 - offset) / step) >= np.ceil((u0 - offset) / step)


class SinSq(Leaf):
    def __init__(self, theta, freq):
        self.theta = _positive("periodic weight theta", np.atleast_1d(theta))
        self.freq = _positive("periodic frequency p", np.atleast_1d(freq))
        if self.freq.size != self.theta.size:
            raise ValueError("theta and frequencies must have equal length")
        super().__init__(self.theta.size)

    def value(self, X, A):
        s = np.sin(self.freq * (X[:, None, :] - A[None, :, :]))
        return np.einsum("nmj,j->nm", s * s, self.theta)

    def self_value(self, X):
        return np.zeros(X.shape[0])

    def _unit_range(self, lo, hi, A):
        u0 = self.freq * (lo[None, :] - A)
        u1 = self.freq * (hi[None, :] - A)
        s0, s1 = np.sin(u0) ** 2, np.sin(u1) ** 2
        rmin = np.where(_contains_lattice(u0, u1, 0.0, math.pi), 0.0, np.minimum(s0, s1))
        rmax = np.where(_contains_lattice(u0, u1, 0.5 * math.pi, math.pi), 1.0, np.maximum(s0, s1))
        return rmin, rmax

    def coord_ranges(self, lo, hi, A):
        rmin, rmax = self._unit_range(lo, hi, A)
        return rmin * self.theta, rmax * self.theta

    def coord_lines(self, lo, hi, A):
        out = np.empty((4,) + A.shape)
        for i in range(A.shape[0]):
            for j in range(self.d):
                fn = SinSquared(self.theta[j], self.freq[j], A[i, j])
                lb = linear_bounds(fn, lo[j], hi[j])
                out[:, i, j] = (lb.a_L, lb.b_L, lb.a_U, lb.b_U)
        return out[0], out[1], out[2], out[3]

    def sup(self, c, A, lo, hi):
        c = np.asarray(c, dtype=float)
        # termwise bound: each c_i * phi_ij maximised independently
        rmin, rmax = self._unit_range(lo, hi, A)
        termwise = float(np.sum(np.where(c[:, None] >= 0, c[:, None] * rmax, c[:, None] * rmin) * self.theta))
        # aggregated bound: per dimension the sum is a single sinusoid in x_j
        total, arg = 0.0, np.empty(self.d)
        for j in range(self.d):
            p = self.freq[j]
            A_ = float(c @ np.cos(2.0 * p * A[:, j]))
            B_ = float(c @ np.sin(2.0 * p * A[:, j]))
            cands = [lo[j], hi[j]]
            if A_ != 0.0 or B_ != 0.0:
                delta = math.atan2(B_, A_)
                # maxima of -cos(2 p x - delta) at 2 p x - delta = pi (mod 2 pi)
                step = 2.0 * math.pi
                u0, u1 = 2.0 * p * lo[j] - delta, 2.0 * p * hi[j] - delta
                k = math.ceil((u0 - math.pi) / step)
                u = math.pi + k * step
                if u <= u1:
                    cands.append((u + delta) / (2.0 * p))
            cands = np.asarray(cands)
            vals = self.theta[j] * (np.sin(p * (cands[:, None] - A[None, :, j])) ** 2 @ c)
            k = int(np.argmax(vals))
            total += float(vals[k]) + _SUP_SLACK * self.theta[j] * float(np.abs(c).sum())
            arg[j] = cands[k]
        if termwise < total:
            return termwise, arg
        return total, arg


class Linear(Leaf):
    exact_linear = True

    def __init__(self, w, v):
        self.w = np.atleast_1d(np.asarray(w, dtype=float))
        self.v = np.atleast_1d(np.asarray(v, dtype=float))
        if self.w.shape != self.v.shape:
            raise ValueError("w and v must have equal length")
        super().__init__(self.w.size)
        self.stationary = bool(np.allclose(self.w, self.v))

    def value(self, X, A):
        return (X @ self.w)[:, None] - (A @ self.v)[None, :]

    def self_value(self, X):
        return X @ (self.w - self.v)

    def coord_ranges(self, lo, hi, A):
        xl = np.minimum(self.w * lo, self.w * hi)
        xu = np.maximum(self.w * lo, self.w * hi)
        off = -A * self.v
        return xl[None, :] + off, xu[None, :] + off

    def coord_lines(self, lo, hi, A):
        a = -A * self.v
        b = np.broadcast_to(self.w, A.shape).copy()
        return a, b, a.copy(), b.copy()

    def sup(self, c, A, lo, hi):
        c = np.asarray(c, dtype=float)
        wbar = c.sum() * self.w
        arg = np.where(wbar >= 0.0, hi, lo)
        val = float(wbar @ arg) - float(c @ (A @ self.v))
        scale = float(np.abs(c) @ (np.abs(A) @ np.abs(self.v))) + float(np.abs(wbar) @ np.abs(arg))
        return val + _SUP_SLACK * scale, arg

    def self_range(self, lo, hi):
        g = self.w - self.v
        return float(np.minimum(g * lo, g * hi).sum()), float(np.maximum(g * lo, g * hi).sum())


# ---------------------------------------------------------------------------
# Kernel trees
# ---------------------------------------------------------------------------


@dataclass
class KernelBound:
    """Affine bounds in the leaf ``phi`` values, one row per anchor.

    ``a_L[i] + B_L[i] . phi(x, A_i) <= k(x, A_i) <= a_U[i] + B_U[i] . phi(x, A_i)``
    and ``v_lo[i] <= k(x, A_i) <= v_hi[i]`` for every ``x`` in the box.
    """

    a_L: np.ndarray
    B_L: np.ndarray
    a_U: np.ndarray
    B_U: np.ndarray
    v_lo: np.ndarray
    v_hi: np.ndarray

    def lower(self, phis):
        """Evaluate the lower bound; ``phis`` has shape ``(n, N, K)``."""
        return self.a_L + np.einsum("nik,ik->ni", phis, self.B_L)

    def upper(self, phis):
        return self.a_U + np.einsum("nik,ik->ni", phis, self.B_U)


class Kernel:
    """Base class.  Subclasses implement ``__call__``, ``bound`` and ``leaves``."""

    d: int

    def __call__(self, X1, X2):
        raise NotImplementedError

    def leaves(self) -> list[Leaf]:
        raise NotImplementedError

    def bound(self, A, lo, hi) -> KernelBound:
        raise NotImplementedError

    def diag_range(self, lo, hi) -> tuple[float, float]:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    @property
    def stationary(self) -> bool:
        return all(leaf.stationary for leaf in self.leaves())

    def diag(self, X):
        X = _as2d(X, self.d)
        return np.array([float(self(x[None, :], x[None, :])[0, 0]) for x in X])

    def leaf_values(self, X, A):
        """Leaf ``phi`` values, shape ``(n, N, K)``."""
        X, A = _as2d(X, self.d), _as2d(A, self.d)
        return np.stack([leaf.value(X, A) for leaf in self.leaves()], axis=-1)

    def sup_leaves(self, C, A, lo, hi):
        """``U`` for a coefficient matrix ``C`` of shape ``(N, K)``.

        Returns the bound and the per-leaf maximisers.
        """
        total, args = 0.0, []
        for k, leaf in enumerate(self.leaves()):
            if not np.any(C[:, k]):
                continue
            val, arg = leaf.sup(C[:, k], A, lo, hi)
            total += val
            args.append(arg)
        return total, args

    def __add__(self, other):
        return Sum([self, other])

    def __mul__(self, other):
        return Product(self, other)


class Elementary(Kernel):
    """``psi(phi(x, x'))`` with a single leaf."""

    family = "elementary"

    def __init__(self, psi: Fn1D, leaf: Leaf):
        self.psi, self.leaf = psi, leaf
        self.d = leaf.d

    def __call__(self, X1, X2):
        X1, X2 = _as2d(X1, self.d), _as2d(X2, self.d)
        return self.psi.f(self.leaf.value(X1, X2))

    def leaves(self):
        return [self.leaf]

    def bound(self, A, lo, hi):
        A = _as2d(A, self.d)
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        plo, phi = self.leaf.phi_range(lo, hi, A)
        a_L, b_L, a_U, b_U = bounds_vec(self.psi, plo, phi)
        v_lo, v_hi = range_vec(self.psi, plo, phi)
        return KernelBound(a_L, b_L[:, None], a_U, b_U[:, None], v_lo, v_hi)

    def diag_range(self, lo, hi):
        s_lo, s_hi = self.leaf.self_range(np.asarray(lo, float), np.asarray(hi, float))
        return self.psi.range(s_lo, s_hi)

    def diag(self, X):
        X = _as2d(X, self.d)
        return self.psi.f(self.leaf.self_value(X))


class SquaredExponential(Elementary):
    family = "se"

    def __init__(self, variance: float, theta):
        self.variance = float(_positive("variance", variance))
        super().__init__(ExpNeg(self.variance), SqDist(theta))

    def to_dict(self):
        return {"family": self.family, "variance": self.variance, "theta": self.leaf.theta.tolist()}


class RationalQuadratic(Elementary):
    family = "rq"

    def __init__(self, variance: float, theta, alpha: float):
        self.variance = float(_positive("variance", variance))
        self.alpha = float(_positive("alpha", alpha))
        super().__init__(RationalQuadraticPsi(self.variance, self.alpha), SqDist(theta))

    def to_dict(self):
        return {
            "family": self.family,
            "variance": self.variance,
            "theta": self.leaf.theta.tolist(),
            "alpha": self.alpha,
        }


class Matern(Elementary):
    """Half-integer Matern, smoothness ``nu = p + 1/2``; ``theta_j = 1 / l_j^2``."""

    family = "matern"

    def __init__(self, variance: float, theta, p: int):
        self.variance = float(_positive("variance", variance))
        self.p = int(p)
        super().__init__(MaternPsi(self.variance, self.p), SqDist(theta))

    def to_dict(self):
        return {"family": self.family, "variance": self.variance, "theta": self.leaf.theta.tolist(), "p": self.p}


class Periodic(Elementary):
    family = "periodic"

    def __init__(self, variance: float, theta, freq):
        self.variance = float(_positive("variance", variance))
        super().__init__(ExpNeg(self.variance, 0.5), SinSq(theta, freq))

    def to_dict(self):
        return {
            "family": self.family,
            "variance": self.variance,
            "theta": self.leaf.theta.tolist(),
            "freq": self.leaf.freq.tolist(),
        }


class CosineKernel(Elementary):
    """``cos(w . x - v . x')``; with ``v = w`` the stationary cosine kernel."""

    family = "cosine"

    def __init__(self, w, v=None):
        w = np.atleast_1d(np.asarray(w, dtype=float))
        v = w if v is None else np.atleast_1d(np.asarray(v, dtype=float))
        super().__init__(Cosine(1.0), Linear(w, v))

    def to_dict(self):
        return {"family": self.family, "w": self.leaf.w.tolist(), "v": self.leaf.v.tolist()}


class ExpLinear(Elementary):
    """``variance * exp(theta . (x + x'))``, a rank-one non-stationary kernel."""

    family = "explinear"

    def __init__(self, variance: float, theta):
        self.variance = float(_positive("variance", variance))
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if np.any(theta < 0):
            raise ValueError("explinear theta must be non-negative")
        super().__init__(ExpPos(self.variance), Linear(theta, -theta))

    def to_dict(self):
        return {"family": self.family, "variance": self.variance, "theta": self.leaf.w.tolist()}


class Sum(Kernel):
    """Non-negative combination ``sum_c w_c k_c``."""

    family = "sum"

    def __init__(self, children, weights=None):
        self.children = list(children)
        if not self.children:
            raise ValueError("Sum needs at least one child")
        w = np.ones(len(self.children)) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (len(self.children),) or np.any(w < 0):
            raise ValueError("Sum weights must be non-negative, one per child")
        self.weights = w
        dims = {c.d for c in self.children}
        if len(dims) != 1:
            raise ValueError("children have different input dimensions")
        self.d = dims.pop()

    def __call__(self, X1, X2):
        return sum(w * c(X1, X2) for w, c in zip(self.weights, self.children))

    def leaves(self):
        return [leaf for c in self.children for leaf in c.leaves()]

    def bound(self, A, lo, hi):
        return compose_bounds_sum([c.bound(A, lo, hi) for c in self.children], self.weights)

    def diag_range(self, lo, hi):
        rs = [c.diag_range(lo, hi) for c in self.children]
        return (
            float(sum(w * r[0] for w, r in zip(self.weights, rs))),
            float(sum(w * r[1] for w, r in zip(self.weights, rs))),
        )

    def diag(self, X):
        return sum(w * c.diag(X) for w, c in zip(self.weights, self.children))

    def to_dict(self):
        return {
            "family": self.family,
            "weights": self.weights.tolist(),
            "children": [c.to_dict() for c in self.children],
        }


class Product(Kernel):
    family = "product"

    def __init__(self, left: Kernel, right: Kernel):
        if left.d != right.d:
            raise ValueError("factors have different input dimensions")
        self.left, self.right = left, right
        self.d = left.d

    def __call__(self, X1, X2):
        return self.left(X1, X2) * self.right(X1, X2)

    def leaves(self):
        return self.left.leaves() + self.right.leaves()

    def bound(self, A, lo, hi):
        return compose_bounds_product(self.left.bound(A, lo, hi), self.right.bound(A, lo, hi))

    def diag_range(self, lo, hi):
        l0, l1 = self.left.diag_range(lo, hi)
        r0, r1 = self.right.diag_range(lo, hi)
        p = [l0 * r0, l0 * r1, l1 * r0, l1 * r1]
        return min(p), max(p)

    def diag(self, X):
        return self.left.diag(X) * self.right.diag(X)

    def to_dict(self):
        return {"family": self.family, "children": [self.left.to_dict(), self.right.to_dict()]}


def compose_bounds_sum(bounds: list[KernelBound], weights) -> KernelBound:
    """Bounds of ``sum_c w_c k_c`` from the children's bounds."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ValueError("sum weights must be non-negative")
    return KernelBound(
        a_L=sum(w * b.a_L for w, b in zip(weights, bounds)),
        B_L=np.concatenate([w * b.B_L for w, b in zip(weights, bounds)], axis=1),
        a_U=sum(w * b.a_U for w, b in zip(weights, bounds)),
        B_U=np.concatenate([w * b.B_U for w, b in zip(weights, bounds)], axis=1),
        v_lo=sum(w * b.v_lo for w, b in zip(weights, bounds)),
        v_hi=sum(w * b.v_hi for w, b in zip(weights, bounds)),
    )


def compose_bounds_product(f: KernelBound, g: KernelBound) -> KernelBound:
    """McCormick bounds for ``k' * k''``.

    Lower:  k'k'' >= L'' k' + L' k'' - L' L''
    Upper:  k'k'' <= L'' k' + U' k'' - U' L''
    Each factor is then replaced by its own lower or upper affine bound
    according to the sign of its coefficient.
    """
    if np.any(f.v_lo > f.v_hi) or np.any(g.v_lo > g.v_hi):
        raise ValueError("inverted factor enclosure")
    L1, U1, L2 = f.v_lo, f.v_hi, g.v_lo

    def pick(b: KernelBound, coef, want_lower):
        use_lower = (coef >= 0) == want_lower
        a = np.where(use_lower, b.a_L, b.a_U)
        B = np.where(use_lower[:, None], b.B_L, b.B_U)
        return coef * a, coef[:, None] * B

    fa, fB = pick(f, L2, True)
    ga, gB = pick(g, L1, True)
    a_L = fa + ga - L1 * L2
    B_L = np.concatenate([fB, gB], axis=1)

    fa, fB = pick(f, L2, False)
    ga, gB = pick(g, U1, False)
    a_U = fa + ga - U1 * L2
    B_U = np.concatenate([fB, gB], axis=1)

    prods = np.stack([f.v_lo * g.v_lo, f.v_lo * g.v_hi, f.v_hi * g.v_lo, f.v_hi * g.v_hi])
    return KernelBound(a_L, B_L, a_U, B_U, prods.min(axis=0), prods.max(axis=0))


def spectral_stationary(variance, thetas, ws) -> Sum:
    """``sum_k variance * exp(-sum_j theta_kj (x_j - x'_j)^2) cos(w_k . (x - x'))``."""
    thetas, ws = np.atleast_2d(thetas), np.atleast_2d(ws)
    if thetas.shape != ws.shape:
        raise ValueError("thetas and ws must have the same shape (K, d)")
    comps = [Product(SquaredExponential(variance, th), CosineKernel(w)) for th, w in zip(thetas, ws)]
    return Sum(comps)


def spectral_nonstationary(variances, thetas, w1, w2) -> Sum:
    """Non-stationary spectral mixture with exp-linear envelopes.

    The feature product ``Psi(x)^T Psi(x')`` with
    ``Psi(x) = [cos(x.w1) + cos(x.w2), sin(x.w1) + sin(x.w2)]`` equals
    ``sum_{a,b} cos(x.w_a - x'.w_b)``, so each component is an exp-linear
    factor times four cosine kernels.
    """
    variances = np.atleast_1d(np.asarray(variances, dtype=float))
    thetas, w1, w2 = np.atleast_2d(thetas), np.atleast_2d(w1), np.atleast_2d(w2)
    comps = []
    for s2, th, wa, wb in zip(variances, thetas, w1, w2):
        trig = Sum([CosineKernel(p, q) for p in (wa, wb) for q in (wa, wb)])
        comps.append(Product(ExpLinear(s2, th), trig))
    return Sum(comps)


# ---------------------------------------------------------------------------
# Convenience entry points
# ---------------------------------------------------------------------------


def eval_kernel(kernel: Kernel, x1, x2) -> float:
    x1, x2 = np.atleast_1d(np.asarray(x1, float)), np.atleast_1d(np.asarray(x2, float))
    if x1.size != kernel.d or x2.size != kernel.d:
        raise ValueError(f"points must have dimension {kernel.d}")
    return float(kernel(x1[None, :], x2[None, :])[0, 0])


def _region(region):
    lo, hi = region
    lo, hi = np.atleast_1d(np.asarray(lo, float)), np.atleast_1d(np.asarray(hi, float))
    if lo.shape != hi.shape or np.any(lo > hi):
        raise ValueError("invalid region")
    return lo, hi


def _single_leaf(kernel: Kernel) -> Elementary:
    if not isinstance(kernel, Elementary):
        raise TypeError("operation defined for elementary kernels only")
    return kernel


def phi_range(kernel: Kernel, anchor, region) -> PhiRange:
    """Range of the inner function ``phi(x, anchor)`` for ``x`` in the region."""
    k = _single_leaf(kernel)
    lo, hi = _region(region)
    A = _as2d(anchor, k.d)
    if lo.size != k.d:
        raise ValueError("region dimension mismatch")
    plo, phi = k.leaf.phi_range(lo, hi, A)
    return PhiRange(float(plo[0]), float(phi[0]))


def build_lbf_ubf(kernel: Kernel, anchor, region) -> LinearBoundPair:
    """Lines in ``phi`` sandwiching ``k(x, anchor)`` over the region."""
    k = _single_leaf(kernel)
    pr = phi_range(k, anchor, region)
    return linear_bounds(k.psi, pr.phi_L, pr.phi_U)


def upper_bounding_U(kernel: Kernel, coeffs, anchors, region) -> float:
    """``U(c) >= sup_x sum_i c_i phi(x, anchors_i)`` summed over the kernel's leaves."""
    c = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if c.size == 0:
        return 0.0
    A = _as2d(anchors, kernel.d)
    if A.shape[0] != c.size:
        raise ValueError("one coefficient per anchor required")
    lo, hi = _region(region)
    K = len(kernel.leaves())
    val, _ = kernel.sup_leaves(np.repeat(c[:, None], K, axis=1), A, lo, hi)
    return float(val)


# ---------------------------------------------------------------------------
# Serialisation
# ---------------------------------------------------------------------------


def kernel_from_dict(spec: dict) -> Kernel:
    fam = spec["family"]
    if fam == "se":
        return SquaredExponential(spec["variance"], spec["theta"])
    if fam == "rq":
        return RationalQuadratic(spec["variance"], spec["theta"], spec["alpha"])
    if fam == "matern":
        return Matern(spec["variance"], spec["theta"], spec["p"])
    if fam == "periodic":
        return Periodic(spec["variance"], spec["theta"], spec["freq"])
    if fam == "cosine":
        return CosineKernel(spec["w"], spec.get("v"))
    if fam == "explinear":
        return ExpLinear(spec["variance"], spec["theta"])
    if fam == "sum":
        return Sum([kernel_from_dict(c) for c in spec["children"]], spec.get("weights"))
    if fam == "product":
        left, right = (kernel_from_dict(c) for c in spec["children"])
        return Product(left, right)
    if fam == "spectral_stationary":
        return spectral_stationary(spec["variance"], spec["thetas"], spec["ws"])
    if fam == "spectral_nonstationary":
        return spectral_nonstationary(spec["variances"], spec["thetas"], spec["w1"], spec["w2"])
    raise ValueError(f"unknown kernel family {fam!r}")
