"""Bounds on the latent posterior mean and variance over a box.

Mean: kernel lines in ``phi`` are selected by the sign of ``t_i`` and the
remaining weighted sum of ``phi`` values is maximised exactly per dimension.

Variance: the posterior variance is ``k(x,x) - r'Sr`` with ``r_i = k(x, x_i)``.
The values ``r`` are tied to ``x`` through a polytope built from the kernel
lines and per-coordinate lines of the inner functions.  Minimising ``r'Sr``
over it (a convex QP) gives the upper bound; for the lower bound ``-r'Sr`` is
rotated into the eigenbasis of ``S`` and each concave term ``-lambda r_hat^2``
is replaced by its chord, which leaves an LP.  When the polytope would be
large the same relaxations are taken over the box of kernel values only.

All optimal values are replaced by certified lower bounds from weak duality,
so the returned quantities are sound regardless of solver tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import GpModel
from .solvers import box_qp, solve_lp, solve_qp

__all__ = [
    "Region",
    "MomentBounds",
    "VariancePolytope",
    "bound_mean",
    "bound_variance_upper",
    "bound_variance_lower",
    "bound_cross_covariance",
    "moment_bounds",
]

# Above this many polytope variables the box relaxation is used.
FULL_MAX_VARS = 200
# Rotated-variable ranges come from LPs only for small models.
LP_RANGES_MAX_N = 12


@dataclass(frozen=True)
class Region:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("region corners must be vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("region lower corner exceeds upper corner")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def ball(cls, x, gamma):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(x - gamma, x + gamma)

    @classmethod
    def point(cls, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return cls(x, x.copy())

    @property
    def d(self) -> int:
        return self.lo.size

    @property
    def widths(self):
        return self.hi - self.lo

    @property
    def diam(self) -> float:
        return float(self.widths.max(initial=0.0))

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    def contains(self, x, tol=0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def clip(self, x):
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)

    def split(self, j: int):
        mid = 0.5 * (self.lo[j] + self.hi[j])
        hi1, lo2 = self.hi.copy(), self.lo.copy()
        hi1[j], lo2[j] = mid, mid
        return Region(self.lo.copy(), hi1), Region(lo2, self.hi.copy())

    def sample(self, rng, n):
        return self.lo + rng.random((n, self.d)) * self.widths

    def grid(self, per_dim):
        axes = [np.linspace(l, h, per_dim) for l, h in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)


@dataclass
class MomentBounds:
    """Bounds on latent means, variances and (optionally) cross-covariances."""

    mu_L: np.ndarray
    mu_U: np.ndarray
    var_L: np.ndarray
    var_U: np.ndarray
    cov_L: np.ndarray | None = None
    cov_U: np.ndarray | None = None
    witnesses: list = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.mu_L.size


# ---------------------------------------------------------------------------
# Mean
# ---------------------------------------------------------------------------


def _select(kb, coef, lower: bool):
    """Scaled kernel bound rows picking LBF/UBF by the sign of ``coef``."""
    use_lower = (coef >= 0) == lower
    a = np.where(use_lower, kb.a_L, kb.a_U)
    B = np.where(use_lower[:, None], kb.B_L, kb.B_U)
    return coef * a, coef[:, None] * B


def mean_bounds_raw(kernel, X, t, region: Region, kb=None):
    """``(mu_L, mu_U, argmin candidates, argmax candidates)``."""
    lo, hi = region.lo, region.hi
    if not np.any(t):
        c = region.center
        return 0.0, 0.0, [c], [c]
    kb = kernel.bound(X, lo, hi) if kb is None else kb
    a, B = _select(kb, t, lower=True)
    u, args_min = kernel.sup_leaves(-B, X, lo, hi)
    mu_L = float(a.sum()) - u
    a, B = _select(kb, t, lower=False)
    u, args_max = kernel.sup_leaves(B, X, lo, hi)
    mu_U = float(a.sum()) + u
    # plain interval enclosure, occasionally tighter on wide boxes
    iv_L = float(np.sum(np.minimum(t * kb.v_lo, t * kb.v_hi)))
    iv_U = float(np.sum(np.maximum(t * kb.v_lo, t * kb.v_hi)))
    mu_L, mu_U = max(mu_L, iv_L), min(mu_U, iv_U)
    c = region.center
    return mu_L, mu_U, args_min + [c], args_max + [c]


def bound_mean(model: GpModel, region: Region, output: int = 0):
    """Sound ``(mu_L, mu_U)`` for the latent mean of ``output`` over the region."""
    mu_L, mu_U, _, _ = mean_bounds_raw(model.kernels[output], model.X, model.t[output], region)
    return mu_L, mu_U


def mean_witnesses(model: GpModel, region: Region, output: int = 0):
    """Candidate minimisers and maximisers of the mean, filtered to the best."""
    _, _, amin, amax = mean_bounds_raw(model.kernels[output], model.X, model.t[output], region)
    return [region.clip(x) for x in amin], [region.clip(x) for x in amax]


# ---------------------------------------------------------------------------
# Variance polytope
# ---------------------------------------------------------------------------


class VariancePolytope:
    """Linear constraints linking ``x``, ``r_i = k(x, x_i)`` and per-coordinate ``phi``.

    Variables are ``z = [x (d) | r (N) | s (slacks)]``; constraints read
    ``G z <= h`` with box ``lb <= z <= ub``.
    """

    def __init__(self, kernel, X, region: Region, kb=None, widen=0.0):
        lo, hi = region.lo, region.hi
        N, d = X.shape
        kb = kernel.bound(X, lo, hi) if kb is None else kb
        leaves = kernel.leaves()
        nonlin = [k for k, leaf in enumerate(leaves) if not leaf.exact_linear]
        n_s = len(nonlin) * N * d
        nz = d + N + n_s
        self.d, self.N, self.nz = d, N, nz
        self.r_slice = slice(d, d + N)
        rows, rhs = [], []
        lb = np.concatenate([lo, kb.v_lo, np.zeros(n_s)])
        ub = np.concatenate([hi, kb.v_hi, np.zeros(n_s)])

        # phi_k^(i) as (coefficient rows over z, constant)
        phi_coef = np.zeros((len(leaves), N, nz))
        phi_const = np.zeros((len(leaves), N))
        off = d + N
        for k, leaf in enumerate(leaves):
            if leaf.exact_linear:
                a, b, _, _ = leaf.coord_lines(lo, hi, X)
                phi_coef[k, :, :d] = b
                phi_const[k] = a.sum(axis=1)
                continue
            aL, bL, aU, bU = leaf.coord_lines(lo, hi, X)
            clo, chi = leaf.coord_ranges(lo, hi, X)
            idx = off + np.arange(N * d).reshape(N, d)
            lb[idx], ub[idx] = clo, chi
            for i in range(N):
                phi_coef[k, i, idx[i]] = 1.0
                for j in range(d):
                    # aL + bL x_j - s <= 0 ;  s - bU x_j <= aU
                    row = np.zeros(nz)
                    row[j], row[idx[i, j]] = bL[i, j], -1.0
                    rows.append(row)
                    rhs.append(-aL[i, j])
                    row = np.zeros(nz)
                    row[j], row[idx[i, j]] = -bU[i, j], 1.0
                    rows.append(row)
                    rhs.append(aU[i, j])
            off += N * d
        # a_L + B_L phi - r <= 0 ;  r - a_U - B_U phi <= 0
        low = np.einsum("ik,kiz->iz", kb.B_L, phi_coef)
        upp = np.einsum("ik,kiz->iz", kb.B_U, phi_coef)
        cL = kb.a_L + np.einsum("ik,ki->i", kb.B_L, phi_const)
        cU = kb.a_U + np.einsum("ik,ki->i", kb.B_U, phi_const)
        eye = np.zeros((N, nz))
        eye[np.arange(N), d + np.arange(N)] = 1.0
        G = np.vstack([np.array(rows).reshape(-1, nz), low - eye, eye - upp])
        h = np.concatenate([np.array(rhs), -cL, cU])
        if widen > 0:
            # a slightly larger polytope keeps an interior for interior-point solvers
            h = h + widen * (1.0 + np.abs(h))
            lb = lb - widen * (1.0 + np.abs(lb))
            ub = ub + widen * (1.0 + np.abs(ub))
        self.G, self.h, self.lb, self.ub = G, h, lb, ub

    def x_of(self, z):
        return z[: self.d]


def _use_full(kernel, N, d, method):
    if method == "full":
        return True
    if method == "box":
        return False
    n_nl = sum(not leaf.exact_linear for leaf in kernel.leaves())
    return d + N * (1 + n_nl * d) <= FULL_MAX_VARS


def variance_upper_raw(kernel, X, S, region: Region, method="auto", kb=None):
    """``(var_U, witness)``: ``max_x k(x,x) - min r'Sr`` relaxed."""
    lo, hi = region.lo, region.hi
    _, dmax = kernel.diag_range(lo, hi)
    if not np.any(S):
        return float(dmax), region.center
    kb = kernel.bound(X, lo, hi) if kb is None else kb
    N, d = X.shape
    if _use_full(kernel, N, d, method):
        poly = VariancePolytope(kernel, X, region, kb, widen=1e-10)
        P = np.zeros((poly.nz, poly.nz))
        P[poly.r_slice, poly.r_slice] = 2.0 * S
        res = solve_qp(P, np.zeros(poly.nz), poly.G, poly.h, poly.lb, poly.ub)
        low = res.certified
        wit = region.clip(poly.x_of(res.x))
    else:
        low, _, _ = box_qp(S, kb.v_lo, kb.v_hi)
        wit = region.center
    return float(dmax - max(low, 0.0)), wit


def _rotated_ranges(U, r_lo, r_hi):
    mid, rad = 0.5 * (r_lo + r_hi), 0.5 * (r_hi - r_lo)
    c = U.T @ mid
    w = np.abs(U).T @ rad
    return c - w, c + w


def variance_lower_raw(kernel, X, S, eig, region: Region, method="auto", ranges="auto", kb=None):
    """``(var_L, witness)`` from the chord relaxation of ``-r'Sr`` in the eigenbasis."""
    lo, hi = region.lo, region.hi
    dmin, _ = kernel.diag_range(lo, hi)
    if not np.any(S):
        return float(dmin), region.center
    kb = kernel.bound(X, lo, hi) if kb is None else kb
    lam, U = eig
    keep = lam > 0
    lam, U = lam[keep], U[:, keep]
    N, d = X.shape
    full = _use_full(kernel, N, d, method)
    rh_lo, rh_hi = _rotated_ranges(U, kb.v_lo, kb.v_hi)
    poly = VariancePolytope(kernel, X, region, kb) if full else None
    if full and (ranges == "lp" or (ranges == "auto" and N <= LP_RANGES_MAX_N)):
        for i in range(U.shape[1]):
            c = np.zeros(poly.nz)
            c[poly.r_slice] = U[:, i]
            rmin = solve_lp(c, poly.G, poly.h, poly.lb, poly.ub)
            rmax = solve_lp(-c, poly.G, poly.h, poly.lb, poly.ub)
            if rmin.status == "optimal":
                rh_lo[i] = max(rh_lo[i], rmin.certified)
            if rmax.status == "optimal":
                rh_hi[i] = min(rh_hi[i], -rmax.certified)
        rh_lo = np.minimum(rh_lo, rh_hi)
    # chord of -lam r^2 on [lo, hi]:  alpha + beta r
    alpha = lam * rh_lo * rh_hi
    beta = -lam * (rh_lo + rh_hi)
    cr = U @ beta
    if full:
        c = np.zeros(poly.nz)
        c[poly.r_slice] = cr
        res = solve_lp(c, poly.G, poly.h, poly.lb, poly.ub)
        val = res.certified
        wit = region.clip(poly.x_of(res.x)) if res.x is not None else region.center
    else:
        val = float(np.sum(np.minimum(cr * kb.v_lo, cr * kb.v_hi)))
        wit = region.center
    return float(max(dmin + alpha.sum() + val, 0.0)), wit


def bound_variance_upper(model: GpModel, region: Region, output: int = 0, method="auto"):
    v, _ = variance_upper_raw(model.kernels[output], model.X, model.block(output, output), region, method)
    return v


def bound_variance_lower(model: GpModel, region: Region, output: int = 0, method="auto", ranges="auto"):
    k = model.kernels[output]
    v, _ = variance_lower_raw(k, model.X, model.block(output, output), model.eig(output), region, method, ranges)
    return v


# ---------------------------------------------------------------------------
# Cross-covariance
# ---------------------------------------------------------------------------


def _interval_bilinear(S, alo, ahi, blo, bhi):
    """Enclosure of ``a' S b`` for ``a in [alo, ahi]``, ``b in [blo, bhi]``."""
    p = np.stack([
        np.outer(alo, blo), np.outer(alo, bhi), np.outer(ahi, blo), np.outer(ahi, bhi)
    ])
    plo, phi = p.min(axis=0), p.max(axis=0)
    lo = np.where(S >= 0, S * plo, S * phi).sum()
    hi = np.where(S >= 0, S * phi, S * plo).sum()
    return float(lo), float(hi)


def bound_cross_covariance(model: GpModel, region: Region, i: int, j: int, kbs=None):
    """Enclosure of the posterior covariance between latents ``i`` and ``j``."""
    if i == j:
        return bound_variance_lower(model, region, i), bound_variance_upper(model, region, i)
    Sij = model.block(i, j)
    if not np.any(Sij):
        return 0.0, 0.0
    if kbs is None:
        kbs = {c: model.kernels[c].bound(model.X, region.lo, region.hi) for c in (i, j)}
    lo, hi = _interval_bilinear(Sij, kbs[i].v_lo, kbs[i].v_hi, kbs[j].v_lo, kbs[j].v_hi)
    return -hi, -lo


# ---------------------------------------------------------------------------
# Everything at once
# ---------------------------------------------------------------------------


def moment_bounds(model: GpModel, region: Region, need=None, method="auto", ranges="auto") -> MomentBounds:
    """Mean and variance bounds for every latent output.

    ``need`` optionally restricts the work: a set drawn from
    ``{"mu_L", "mu_U", "var_L", "var_U", "cov"}``.
    """
    need = {"mu_L", "mu_U", "var_L", "var_U", "cov"} if need is None else set(need)
    m = model.m
    mu_L, mu_U = np.full(m, -np.inf), np.full(m, np.inf)
    var_L, var_U = np.zeros(m), np.full(m, np.inf)
    wit = []
    kbs = {}
    for c in range(m):
        k = model.kernels[c]
        kb = kbs[c] = k.bound(model.X, region.lo, region.hi)
        if need & {"mu_L", "mu_U"}:
            a, b, amin, amax = mean_bounds_raw(k, model.X, model.t[c], region, kb)
            mu_L[c], mu_U[c] = a, b
            wit += [region.clip(x) for x in amin + amax]
        S = model.block(c, c)
        if "var_U" in need:
            var_U[c], w = variance_upper_raw(k, model.X, S, region, method, kb)
            wit.append(w)
        if "var_L" in need:
            var_L[c], w = variance_lower_raw(k, model.X, S, model.eig(c), region, method, ranges, kb)
            wit.append(w)
    if "var_L" in need and "var_U" in need:
        var_L = np.minimum(var_L, var_U)
    cov_L = cov_U = None
    if "cov" in need and m > 1:
        cov_L, cov_U = np.diag(var_L), np.diag(var_U)
        for a in range(m):
            for b in range(a + 1, m):
                lo, hi = bound_cross_covariance(model, region, a, b, kbs)
                cov_L[a, b] = cov_L[b, a] = lo
                cov_U[a, b] = cov_U[b, a] = hi
    return MomentBounds(mu_L, mu_U, var_L, var_U, cov_L, cov_U, wit)
