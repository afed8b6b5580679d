"""Prediction-range bounds from latent moment bounds.

Everything here maps interval bounds on the latent posterior moments over a
region to certified bounds on the predictive class probability over that
region.  Binary probit and logistic models use monotonicity of the
predictive integral in ``(mu, var)``; generic and multi-class models use a
partition of the latent space into cells and bound the Gaussian mass of
each cell.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit, ndtr, ndtri

from .bounds import MomentBounds, Region, moment_bounds
from .interval import SingularIntervalMatrix, iadd, imatmul, imul, iinv, isub
from .model import GpModel, logistic_predictive, probit_predictive

__all__ = [
    "VAR_FLOOR",
    "RangeBounds",
    "LatentPartition",
    "build_partition",
    "probit_range_bounds",
    "logistic_range_bounds",
    "binary_range_bounds",
    "gaussian_mass",
    "gaussian_integral_extrema",
    "discretized_binary_bounds",
    "conditional_moment_bounds",
    "softmax_corner",
    "softmax_discretized_bounds",
    "moment_partitions",
    "multiclass_range_bounds",
    "discretized_range_bounds",
    "SingularIntervalMatrix",
]

VAR_FLOOR = 1e-12
_TINY = 1e-300


@dataclass
class RangeBounds:
    """Per-class bounds on the minimum and maximum predictive probability."""

    pi_L_min: np.ndarray
    pi_U_min: np.ndarray
    pi_L_max: np.ndarray
    pi_U_max: np.ndarray
    witnesses: list = field(default_factory=list)

    def __post_init__(self):
        for name in ("pi_L_min", "pi_U_min", "pi_L_max", "pi_U_max"):
            setattr(self, name, np.clip(np.asarray(getattr(self, name), dtype=float), 0.0, 1.0))


# ---------------------------------------------------------------------------
# Latent partition
# ---------------------------------------------------------------------------


def _link_pair(link: str, lam: float):
    if link == "logistic":
        return (lambda f: expit(lam * f)), (lambda p: logit(p) / lam)
    if link == "probit":
        return (lambda f: ndtr(lam * f)), (lambda p: ndtri(p) / lam)
    raise ValueError(f"unknown link {link!r}")


@dataclass(frozen=True)
class LatentPartition:
    """Contiguous cells ``[a_l, b_l]`` covering the real line.

    The cells carry equal mass ``1/M`` under the link function viewed as a
    distribution function.
    """

    edges: np.ndarray
    link: str = "logistic"
    lam: float = 1.0

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if e.ndim != 1 or e.size < 2 or e[0] != -np.inf or e[-1] != np.inf:
            raise ValueError("edges must run from -inf to +inf")
        if np.any(np.diff(e) <= 0):
            raise ValueError("edges must be strictly increasing")
        object.__setattr__(self, "edges", e)

    @property
    def M(self) -> int:
        return self.edges.size - 1

    @property
    def a(self):
        return self.edges[:-1]

    @property
    def b(self):
        return self.edges[1:]

    def sigma(self, f):
        return _link_pair(self.link, self.lam)[0](np.asarray(f, dtype=float))


def build_partition(M: int | None = None, eps: float | None = None, link: str = "logistic",
                    lam: float = 1.0) -> LatentPartition:
    """Equal-link-mass partition with ``M`` cells, or ``M = ceil(2 / eps)``.

    >>> build_partition(M=4).edges.round(4).tolist()
    [-inf, -1.0986, 0.0, 1.0986, inf]
    """
    if M is None:
        if eps is None or eps <= 0:
            raise ValueError("give M >= 1 or eps > 0")
        M = int(np.ceil(2.0 / eps))
    if M < 1:
        raise ValueError("M must be at least 1")
    inv = _link_pair(link, lam)[1]
    inner = inv(np.arange(1, M) / M) if M > 1 else np.empty(0)
    return LatentPartition(np.concatenate([[-np.inf], inner, [np.inf]]), link, lam)


# ---------------------------------------------------------------------------
# Closed-form binary bounds
# ---------------------------------------------------------------------------


def _moments(mb, output):
    if isinstance(mb, MomentBounds):
        return (float(mb.mu_L[output]), float(mb.mu_U[output]),
                float(mb.var_L[output]), float(mb.var_U[output]))
    return tuple(float(v) for v in mb)


def _corners(mu_L, mu_U, var_L, var_U):
    if var_L < 0:
        raise ValueError("variance lower bound must be non-negative")
    v_min = var_U if mu_L >= 0 else var_L
    v_max = var_L if mu_U >= 0 else var_U
    return (mu_L, v_min), (mu_U, v_max)


def probit_range_bounds(mb, lam: float = 1.0, output: int = 0):
    """``(pi_L_min, pi_U_max)`` for a probit likelihood.

    ``mb`` is a :class:`MomentBounds` or a tuple ``(mu_L, mu_U, var_L, var_U)``.
    The predictive probability is increasing in the mean and moves towards
    1/2 as the variance grows, so each extremum sits at a corner.
    """
    lo, hi = _corners(*_moments(mb, output))
    return float(probit_predictive(*lo, lam)), float(probit_predictive(*hi, lam))


def logistic_range_bounds(mb, output: int = 0):
    """``(pi_L_min, pi_U_max)`` for a logistic likelihood (same corner rule)."""
    lo, hi = _corners(*_moments(mb, output))
    return float(logistic_predictive(*lo)), float(logistic_predictive(*hi))


def binary_range_bounds(mb, link: str, lam: float = 1.0, output: int = 0):
    if link == "probit":
        return probit_range_bounds(mb, lam, output)
    if link == "logistic":
        if lam != 1.0:
            mu_L, mu_U, v_L, v_U = _moments(mb, output)
            return logistic_range_bounds((lam * mu_L, lam * mu_U, lam**2 * v_L, lam**2 * v_U))
        return logistic_range_bounds(mb, output)
    raise ValueError(f"unknown binary link {link!r}")


# ---------------------------------------------------------------------------
# Gaussian mass of an interval
# ---------------------------------------------------------------------------


def gaussian_mass(mu, var, a, b):
    """``P(a <= f <= b)`` for ``f ~ N(mu, var)``; zero variance is a point mass."""
    mu, var, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (mu, var, a, b)))
    s = np.sqrt(np.maximum(var, _TINY))
    with np.errstate(invalid="ignore", over="ignore"):
        za = np.where(np.isneginf(a), -np.inf, (a - mu) / s)
        zb = np.where(np.isposinf(b), np.inf, (b - mu) / s)
    # subtract in the tail where the difference keeps its precision
    upper_tail = za > 0
    m = np.where(upper_tail, ndtr(-za) - ndtr(-zb), ndtr(zb) - ndtr(za))
    return np.clip(m, 0.0, 1.0)


def _critical_var(mu, a, b):
    """Variance maximising the mass of ``[a, b]`` for a mean outside the cell."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        da, db = mu - a, mu - b
        v = (da * da - db * db) / (2.0 * np.log(da / db))
    ok = np.isfinite(a) & np.isfinite(b) & (da * db > 0) & np.isfinite(v) & (v > 0)
    return np.where(ok, v, np.nan)


def gaussian_integral_extrema(mu_lo, mu_hi, var_lo, var_hi, a, b):
    """Min and max of ``P(a <= f <= b)`` over ``mu in [mu_lo, mu_hi]``, ``var in [var_lo, var_hi]``.

    For fixed variance the mass is symmetric and unimodal in the mean about
    the cell centre; for fixed mean it is either monotone or has a single
    interior maximum in the variance.  So the maximum uses the admissible
    mean closest to the centre and the best of the variance endpoints and
    the clipped critical variance; the minimum uses the farthest mean and
    the worse variance endpoint.  Infinite edges are allowed.
    """
    mu_lo, mu_hi, var_lo, var_hi, a, b = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (mu_lo, mu_hi, var_lo, var_hi, a, b)))
    if np.any(~(a < b)):
        raise ValueError("invalid cell: need a < b")
    if np.any(var_lo < 0) or np.any(var_lo > var_hi) or np.any(mu_lo > mu_hi):
        raise ValueError("invalid moment ranges")
    lo_inf, hi_inf = np.isneginf(a), np.isposinf(b)
    with np.errstate(invalid="ignore"):
        centre = np.where(lo_inf & hi_inf, 0.0,
                          np.where(lo_inf, -np.inf, np.where(hi_inf, np.inf, 0.5 * (a + b))))
    mu_best = np.clip(centre, mu_lo, mu_hi)
    with np.errstate(invalid="ignore"):
        far_hi = np.abs(mu_hi - centre) >= np.abs(mu_lo - centre)
    far_hi = np.where(lo_inf & ~hi_inf, True, np.where(hi_inf & ~lo_inf, False, far_hi))
    mu_worst = np.where(far_hi, mu_hi, mu_lo)

    vc = _critical_var(mu_best, a, b)
    vc = np.where(np.isnan(vc), var_lo, np.clip(vc, var_lo, var_hi))
    cand = [gaussian_mass(mu_best, v, a, b) for v in (var_lo, var_hi, vc)]
    mx = np.maximum.reduce(cand)
    mn = np.minimum(gaussian_mass(mu_worst, var_lo, a, b), gaussian_mass(mu_worst, var_hi, a, b))
    both = lo_inf & hi_inf
    mn, mx = np.where(both, 1.0, mn), np.where(both, 1.0, mx)
    return mn, mx


# ---------------------------------------------------------------------------
# Discretised bounds
# ---------------------------------------------------------------------------


def _combine(sig_lo, sig_hi, m_lo, m_hi):
    """Bound ``sum_l E[sigma 1_l]`` from per-cell link ranges and mass ranges.

    Besides the direct sums, the complements use that the cell masses add
    up to one; the better of the two is kept on each side.
    """
    lower = max(float(np.sum(sig_lo * m_lo)), 1.0 - float(np.sum((1.0 - sig_lo) * m_hi)))
    upper = min(float(np.sum(sig_hi * m_hi)), 1.0 - float(np.sum((1.0 - sig_hi) * m_lo)))
    return min(max(lower, 0.0), 1.0), min(max(upper, 0.0), 1.0)


def discretized_binary_bounds(mb, partition: LatentPartition, output: int = 0):
    """``(pi_L_min, pi_U_max)`` of the positive class via the latent partition."""
    mu_L, mu_U, v_L, v_U = _moments(mb, output)
    m_lo, m_hi = gaussian_integral_extrema(mu_L, mu_U, v_L, v_U, partition.a, partition.b)
    return _combine(partition.sigma(partition.a), partition.sigma(partition.b), m_lo, m_hi)


def conditional_moment_bounds(mb: MomentBounds, box_lo, box_hi, k: int, cond):
    """Interval bounds on the moments of latent ``k`` given latents ``cond`` lie in a box.

    ``box_lo``/``box_hi`` have shape ``(n, len(cond))`` (one row per box) and
    may hold infinite entries.  Returns arrays ``(mu_lo, mu_hi, var_lo, var_hi)``
    of length ``n``.  Raises :class:`SingularIntervalMatrix` when the
    covariance block of ``cond`` cannot be inverted as an interval matrix,
    which signals that the region is too large.
    """
    box_lo, box_hi = np.atleast_2d(box_lo), np.atleast_2d(box_hi)
    n = box_lo.shape[0]
    cond = list(cond)
    mu_k = np.full(n, mb.mu_L[k]), np.full(n, mb.mu_U[k])
    vk_lo, vk_hi = float(mb.var_L[k]), float(mb.var_U[k])
    if not cond:
        return mu_k[0], mu_k[1], np.full(n, max(vk_lo, VAR_FLOOR)), np.full(n, max(vk_hi, VAR_FLOOR))
    if mb.cov_L is None:
        raise ValueError("cross-covariance bounds are required")
    C_lo, C_hi = mb.cov_L, mb.cov_U
    ix = np.ix_(cond, cond)
    inv_lo, inv_hi = iinv(C_lo[ix], C_hi[ix])
    row_lo, row_hi = C_lo[[k]][:, cond], C_hi[[k]][:, cond]
    w_lo, w_hi = imatmul(row_lo, row_hi, inv_lo, inv_hi)
    q_lo, q_hi = imatmul(w_lo, w_hi, C_lo[np.ix_(cond, [k])], C_hi[np.ix_(cond, [k])])
    v_lo, v_hi = isub(vk_lo, vk_hi, q_lo[0, 0], q_hi[0, 0])
    v_lo = max(float(v_lo), VAR_FLOOR)
    v_hi = max(float(v_hi), VAR_FLOOR)
    d_lo, d_hi = isub(box_lo, box_hi, mb.mu_L[cond], mb.mu_U[cond])
    p_lo, p_hi = imul(w_lo, w_hi, d_lo, d_hi)
    with np.errstate(invalid="ignore"):
        s_lo, s_hi = p_lo.sum(axis=1), p_hi.sum(axis=1)
    mu_lo, mu_hi = iadd(mu_k[0], mu_k[1], s_lo, s_hi)
    # inf - inf inside the sums means the enclosure is unbounded
    mu_lo = np.where(np.isnan(mu_lo), -np.inf, mu_lo)
    mu_hi = np.where(np.isnan(mu_hi), np.inf, mu_hi)
    return mu_lo, mu_hi, np.full(n, v_lo), np.full(n, min(max(v_hi, v_lo), np.inf))


def softmax_corner(xi, i: int):
    """``softmax(xi)[i]`` along the last axis, with limits for infinite entries."""
    xi = np.asarray(xi, dtype=float)
    with np.errstate(invalid="ignore", over="ignore"):
        diff = xi - xi[..., [i]]
        e = np.exp(diff)
    e[..., i] = 0.0
    e = np.where(np.isnan(e), np.inf, e)
    return 1.0 / (1.0 + e.sum(axis=-1))


def moment_partitions(mb: MomentBounds, M: int, width: float = 4.0):
    """One partition per latent coordinate, fitted to its moment bounds.

    ``M - 2`` equal cells cover ``[mu_L - width*sd, mu_U + width*sd]`` with
    ``sd`` the square root of the variance upper bound; two half-infinite cells
    take the tails.  Any partition gives sound bounds; this one puts the
    resolution where the latent mass is.
    """
    if M < 3:
        return [build_partition(M=M) for _ in range(mb.m)]
    parts = []
    for k in range(mb.m):
        sd = float(np.sqrt(max(mb.var_U[k], VAR_FLOOR)))
        lo, hi = mb.mu_L[k] - width * sd, mb.mu_U[k] + width * sd
        inner = np.linspace(lo, hi, M - 1)
        parts.append(LatentPartition(np.concatenate([[-np.inf], inner, [np.inf]])))
    return parts


def softmax_discretized_bounds(mb: MomentBounds, partition, i: int, max_cells: int = 10**6):
    """``(pi_L_min, pi_U_max)`` for class ``i`` of a softmax model.

    ``partition`` is one :class:`LatentPartition` shared by every latent
    coordinate or a list with one per coordinate.  The mass of a product cell
    is bounded by the marginal mass of the last coordinate times conditional
    masses of the others, each conditioned on the coordinates after it lying
    in their cells.
    """
    m = mb.m
    parts = [partition] * m if isinstance(partition, LatentPartition) else list(partition)
    if len(parts) != m:
        raise ValueError("need one partition per latent coordinate")
    sizes = [p.M for p in parts]
    if int(np.prod(sizes)) > max_cells:
        raise ValueError(f"{int(np.prod(sizes))} cells exceed the cap of {max_cells}")
    cells = np.array(list(itertools.product(*(range(n) for n in sizes))), dtype=int)
    a = np.stack([p.a[cells[:, k]] for k, p in enumerate(parts)], axis=1)
    b = np.stack([p.b[cells[:, k]] for k, p in enumerate(parts)], axis=1)
    m_lo = np.ones(len(cells))
    m_hi = np.ones(len(cells))
    for k in range(m - 1, -1, -1):
        cond = list(range(k + 1, m))
        mu_lo, mu_hi, v_lo, v_hi = conditional_moment_bounds(mb, a[:, cond], b[:, cond], k, cond)
        lo, hi = gaussian_integral_extrema(mu_lo, mu_hi, v_lo, v_hi, a[:, k], b[:, k])
        m_lo *= lo
        m_hi *= hi
    m_hi = np.minimum(m_hi, 1.0)
    xi_lo, xi_hi = b.copy(), a.copy()
    xi_lo[:, i], xi_hi[:, i] = a[:, i], b[:, i]
    return _combine(softmax_corner(xi_lo, i), softmax_corner(xi_hi, i), m_lo, m_hi)


def discretized_range_bounds(mb: MomentBounds, partition: LatentPartition, i: int, link: str,
                             max_cells: int = 10**6):
    """Dispatch to the binary or softmax discretised bound.

    For binary models ``i = 1`` is the positive class and ``i = 0`` its
    complement.
    """
    if link == "softmax":
        return softmax_discretized_bounds(mb, partition, i, max_cells)
    lo, hi = discretized_binary_bounds(mb, partition)
    return (lo, hi) if i == 1 else (1.0 - hi, 1.0 - lo)


def multiclass_range_bounds(model: GpModel, region: Region, partition: LatentPartition, i: int,
                            max_cells: int = 10**6, mb: MomentBounds | None = None):
    """Sound ``(pi_L_min, pi_U_max)`` of softmax class ``i`` over the region.

    ``partition`` is a shared :class:`LatentPartition`, a list with one per
    coordinate, or an integer ``M`` for partitions fitted to the moment
    bounds.  Returns the vacuous ``(0, 1)`` when the covariance block cannot
    be inverted as an interval matrix; refining the region fixes that.
    """
    if model.task != "multiclass":
        raise ValueError("multi-class model required")
    mb = moment_bounds(model, region) if mb is None else mb
    if isinstance(partition, (int, np.integer)):
        partition = moment_partitions(mb, int(partition))
    try:
        return softmax_discretized_bounds(mb, partition, i, max_cells)
    except SingularIntervalMatrix:
        return 0.0, 1.0
