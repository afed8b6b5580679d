"""Linear lower/upper bounding functions for smooth scalar functions.

Every kernel handled by the package is written as ``psi(phi(x, x'))`` with a
scalar outer function ``psi``.  Over an interval ``[lo, hi]`` of its argument
``psi`` is sandwiched by two lines,

    a_L + b_L * t  <=  psi(t)  <=  a_U + b_U * t ,

built from chords on concave pieces and midpoint tangents on convex pieces.
Pieces are delimited by the inflection points of ``psi``, which each function
class locates analytically.  Upper lines are lower lines of ``-psi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Fn1D",
    "LinearBoundPair",
    "PhiRange",
    "linear_bounds",
    "lower_line",
    "ExpNeg",
    "ExpPos",
    "RationalQuadraticPsi",
    "MaternPsi",
    "Cosine",
    "Quadratic",
    "SinSquared",
    "Affine",
]


@dataclass(frozen=True)
class LinearBoundPair:
    """Coefficients of ``a_L + b_L t <= f(t) <= a_U + b_U t`` on an interval."""

    a_L: float
    b_L: float
    a_U: float
    b_U: float

    def lower(self, t):
        return self.a_L + self.b_L * np.asarray(t, dtype=float)

    def upper(self, t):
        return self.a_U + self.b_U * np.asarray(t, dtype=float)


@dataclass(frozen=True)
class PhiRange:
    phi_L: float
    phi_U: float

    def __post_init__(self):
        if self.phi_L > self.phi_U:
            raise ValueError(f"empty range [{self.phi_L}, {self.phi_U}]")


class Fn1D:
    """Smooth scalar function with analytically known curvature changes.

    Subclasses implement ``f``, ``df`` and ``d2`` (vectorised) and
    ``inflections``/``critical_points`` returning the sorted points strictly
    inside ``(lo, hi)`` where the second/first derivative changes sign.
    ``convex`` is True/False when the curvature sign is global, None otherwise.
    """

    convex: bool | None = None

    def f(self, t):
        raise NotImplementedError

    def df(self, t):
        raise NotImplementedError

    def d2(self, t):
        raise NotImplementedError

    def inflections(self, lo: float, hi: float) -> list[float]:
        return []

    def critical_points(self, lo: float, hi: float) -> list[float]:
        return []

    def range(self, lo: float, hi: float) -> tuple[float, float]:
        pts = [lo, hi, *self.critical_points(lo, hi)]
        vals = self.f(np.asarray(pts, dtype=float))
        return float(np.min(vals)), float(np.max(vals))

    def __neg__(self) -> Fn1D:
        return _Negated(self)


class _Negated(Fn1D):
    def __init__(self, inner: Fn1D):
        self.inner = inner
        self.convex = None if inner.convex is None else not inner.convex

    def f(self, t):
        return -self.inner.f(t)

    def df(self, t):
        return -self.inner.df(t)

    def d2(self, t):
        return -self.inner.d2(t)

    def inflections(self, lo, hi):
        return self.inner.inflections(lo, hi)

    def critical_points(self, lo, hi):
        return self.inner.critical_points(lo, hi)

    def __neg__(self):
        return self.inner


# ---------------------------------------------------------------------------
# Line construction
# ---------------------------------------------------------------------------


def _chord(fn: Fn1D, lo: float, hi: float) -> tuple[float, float]:
    flo, fhi = float(fn.f(lo)), float(fn.f(hi))
    b = (fhi - flo) / (hi - lo)
    return flo - b * lo, b


def _tangent(fn: Fn1D, lo: float, hi: float) -> tuple[float, float]:
    mid = 0.5 * (lo + hi)
    b = float(fn.df(mid))
    return float(fn.f(mid)) - b * mid, b


def _piece_line(fn: Fn1D, lo: float, hi: float) -> tuple[float, float]:
    if hi - lo <= 0.0:
        return float(fn.f(lo)), 0.0
    mid = 0.5 * (lo + hi)
    if float(fn.d2(mid)) >= 0.0:
        return _tangent(fn, lo, hi)
    return _chord(fn, lo, hi)


def _line_through(p: tuple[float, float], q: tuple[float, float]) -> tuple[float, float]:
    (t0, v0), (t1, v1) = p, q
    if t1 == t0:
        return min(v0, v1), 0.0
    b = (v1 - v0) / (t1 - t0)
    return v0 - b * t0, b


def _merge(left, right, lo, mid, hi, left_chord_first: bool | None):
    """Single line under ``left`` on [lo, mid] and ``right`` on [mid, hi]."""
    (a1, b1), (a2, b2) = left, right
    g1 = lambda t: a1 + b1 * t  # noqa: E731
    g2 = lambda t: a2 + b2 * t  # noqa: E731
    if left_chord_first is True:
        # concave then convex: through (lo, min(g'(lo), g''(lo))) and (hi, g''(hi))
        return _line_through((lo, min(g1(lo), g2(lo))), (hi, g2(hi)))
    if left_chord_first is False:
        # convex then concave, mirrored rule
        return _line_through((lo, g1(lo)), (hi, min(g1(hi), g2(hi))))
    # generic: lowest-hull line under the three breakpoint values
    pts = [(lo, g1(lo)), (mid, min(g1(mid), g2(mid))), (hi, g2(hi))]
    best = None
    for i in range(3):
        for j in range(i + 1, 3):
            a, b = _line_through(pts[i], pts[j])
            if all(a + b * t <= v + 1e-15 * (1 + abs(v)) for t, v in pts):
                score = a + b * 0.5 * (lo + hi)
                if best is None or score > best[0]:
                    best = (score, a, b)
    return best[1], best[2]


def lower_line(fn: Fn1D, lo: float, hi: float) -> tuple[float, float]:
    """Intercept and slope of a line below ``fn`` on ``[lo, hi]``."""
    lo, hi = float(lo), float(hi)
    if hi < lo:
        raise ValueError(f"inverted interval [{lo}, {hi}]")
    if hi == lo:
        return float(fn.f(lo)), 0.0
    if fn.convex is True:
        return _tangent(fn, lo, hi)
    if fn.convex is False:
        return _chord(fn, lo, hi)
    cuts = [lo, *[c for c in fn.inflections(lo, hi) if lo < c < hi], hi]
    if len(cuts) == 2:
        return _piece_line(fn, lo, hi)
    line = _piece_line(fn, cuts[0], cuts[1])
    first_concave = float(fn.d2(0.5 * (cuts[0] + cuts[1]))) < 0.0
    for k in range(1, len(cuts) - 1):
        nxt = _piece_line(fn, cuts[k], cuts[k + 1])
        rule = first_concave if len(cuts) == 3 else None
        line = _merge(line, nxt, cuts[0], cuts[k], cuts[k + 1], rule)
    return line


def linear_bounds(fn: Fn1D, lo: float, hi: float) -> LinearBoundPair:
    """LBF/UBF pair for ``fn`` restricted to ``[lo, hi]``.

    >>> lb = linear_bounds(ExpNeg(), 0.0, 1.0)
    >>> round(lb.b_U, 4), round(lb.a_U, 4)
    (-0.6321, 1.0)
    """
    a_L, b_L = lower_line(fn, lo, hi)
    a_nU, b_nU = lower_line(-fn, lo, hi)
    return LinearBoundPair(a_L, b_L, -a_nU, -b_nU)


def convex_bounds_vec(fn: Fn1D, lo, hi):
    """Vectorised ``linear_bounds`` for a globally convex ``fn``.

    Returns arrays ``(a_L, b_L, a_U, b_U)``; degenerate intervals give the
    constant line through ``fn(lo)``.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    mid = 0.5 * (lo + hi)
    fmid = fn.f(mid)
    b_L = fn.df(mid)
    a_L = fmid - b_L * mid
    flo, fhi = fn.f(lo), fn.f(hi)
    width = hi - lo
    flat = width <= 0.0
    safe = np.where(flat, 1.0, width)
    b_U = np.where(flat, 0.0, (fhi - flo) / safe)
    a_U = flo - b_U * lo
    b_L = np.where(flat, 0.0, b_L)
    a_L = np.where(flat, flo, a_L)
    return a_L, b_L, a_U, b_U


def bounds_vec(fn: Fn1D, lo, hi):
    """``linear_bounds`` over arrays of intervals."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if fn.convex is True:
        return convex_bounds_vec(fn, lo, hi)
    if fn.convex is False:
        a_nL, b_nL, a_nU, b_nU = convex_bounds_vec(-fn, lo, hi)
        return -a_nU, -b_nU, -a_nL, -b_nL
    out = np.empty((4,) + lo.shape)
    for idx in np.ndindex(lo.shape):
        lb = linear_bounds(fn, lo[idx], hi[idx])
        out[(slice(None),) + idx] = (lb.a_L, lb.b_L, lb.a_U, lb.b_U)
    return out[0], out[1], out[2], out[3]


def range_vec(fn: Fn1D, lo, hi):
    """Exact range of ``fn`` over each interval (endpoints + critical points)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    flo, fhi = fn.f(lo), fn.f(hi)
    rmin, rmax = np.minimum(flo, fhi), np.maximum(flo, fhi)
    if getattr(fn, "monotone", False):
        return rmin, rmax
    rmin, rmax = rmin.copy(), rmax.copy()
    for idx in np.ndindex(lo.shape):
        cps = fn.critical_points(lo[idx], hi[idx])
        if cps:
            v = fn.f(np.asarray(cps))
            rmin[idx] = min(rmin[idx], float(np.min(v)))
            rmax[idx] = max(rmax[idx], float(np.max(v)))
    return rmin, rmax


# ---------------------------------------------------------------------------
# Outer functions psi
# ---------------------------------------------------------------------------


class ExpNeg(Fn1D):
    """``scale * exp(-rate * t)``."""

    convex = True
    monotone = True

    def __init__(self, scale: float = 1.0, rate: float = 1.0):
        self.scale, self.rate = float(scale), float(rate)

    def f(self, t):
        return self.scale * np.exp(-self.rate * np.asarray(t, dtype=float))

    def df(self, t):
        return -self.rate * self.f(t)

    def d2(self, t):
        return self.rate**2 * self.f(t)


class ExpPos(Fn1D):
    """``scale * exp(t)``."""

    convex = True
    monotone = True

    def __init__(self, scale: float = 1.0):
        self.scale = float(scale)

    def f(self, t):
        return self.scale * np.exp(np.asarray(t, dtype=float))

    df = f
    d2 = f


class RationalQuadraticPsi(Fn1D):
    """``scale * (1 + t/2) ** (-alpha)`` for ``t >= 0``."""

    convex = True
    monotone = True

    def __init__(self, scale: float, alpha: float):
        self.scale, self.alpha = float(scale), float(alpha)

    def f(self, t):
        return self.scale * (1.0 + 0.5 * np.asarray(t, dtype=float)) ** (-self.alpha)

    def df(self, t):
        t = np.asarray(t, dtype=float)
        return -0.5 * self.alpha * self.scale * (1.0 + 0.5 * t) ** (-self.alpha - 1.0)

    def d2(self, t):
        t = np.asarray(t, dtype=float)
        return 0.25 * self.alpha * (self.alpha + 1.0) * self.scale * (1.0 + 0.5 * t) ** (-self.alpha - 2.0)


class MaternPsi(Fn1D):
    """Half-integer Matern (nu = p + 1/2) as a function of ``t = r^2 / l^2``.

    Matern covariances are completely monotone in the squared distance, so
    the outer function is convex with no inflection points.
    """

    convex = True
    monotone = True

    def __init__(self, scale: float, p: int):
        if p < 0 or int(p) != p:
            raise ValueError("Matern order p must be a non-negative integer")
        self.scale, self.p = float(scale), int(p)
        self.c = math.sqrt(2.0 * p + 1.0)
        fac = math.factorial
        # poly(s) = sum_l coef[l] * s**(p - l); coef[p] == 1
        self.coef = np.array(
            [
                fac(p) / fac(2 * p) * fac(p + l) / (fac(l) * fac(p - l)) * (2.0 * self.c) ** (p - l)
                for l in range(p + 1)
            ]
        )
        self.powers = np.arange(p, -1, -1, dtype=float)

    def _poly(self, s):
        return np.sum(self.coef * s[..., None] ** self.powers, axis=-1)

    def _dpoly(self, s):
        pw = np.maximum(self.powers - 1.0, 0.0)
        return np.sum(self.coef * self.powers * s[..., None] ** pw, axis=-1)

    def f(self, t):
        s = np.sqrt(np.maximum(np.asarray(t, dtype=float), 0.0))
        return self.scale * np.exp(-self.c * s) * self._poly(s)

    def df(self, t):
        s = np.sqrt(np.maximum(np.asarray(t, dtype=float), 0.0))
        ds = self.scale * np.exp(-self.c * s) * (self._dpoly(s) - self.c * self._poly(s))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = ds / (2.0 * s)
        if self.p == 0:
            return np.where(s > 0, out, -np.inf)
        # finite limit at s -> 0 for p >= 1
        return np.where(s > 1e-12, out, self._df_at_zero())

    def _df_at_zero(self) -> float:
        # psi(t) = scale * (1 - c^2 t / (2 (2p - 1)) + o(t)) for p >= 1
        return -self.scale * self.c**2 / (2.0 * (2.0 * self.p - 1.0))

    def d2(self, t):
        t = np.asarray(t, dtype=float)
        return np.ones_like(t)


class Cosine(Fn1D):
    """``scale * cos(t)``; inflections at ``pi/2 + k pi``."""

    convex = None

    def __init__(self, scale: float = 1.0):
        self.scale = float(scale)

    def f(self, t):
        return self.scale * np.cos(np.asarray(t, dtype=float))

    def df(self, t):
        return -self.scale * np.sin(np.asarray(t, dtype=float))

    def d2(self, t):
        return -self.f(t)

    def inflections(self, lo, hi):
        return _lattice(lo, hi, 0.5 * math.pi, math.pi)

    def critical_points(self, lo, hi):
        return _lattice(lo, hi, 0.0, math.pi)


# ---------------------------------------------------------------------------
# Per-coordinate inner functions phi_j(x_j)
# ---------------------------------------------------------------------------


class Quadratic(Fn1D):
    """``weight * (t - centre)^2``."""

    convex = True

    def __init__(self, weight: float, centre: float):
        self.w, self.c = float(weight), float(centre)

    def f(self, t):
        return self.w * (np.asarray(t, dtype=float) - self.c) ** 2

    def df(self, t):
        return 2.0 * self.w * (np.asarray(t, dtype=float) - self.c)

    def d2(self, t):
        return np.full_like(np.asarray(t, dtype=float), 2.0 * self.w)

    def critical_points(self, lo, hi):
        return [self.c] if lo < self.c < hi else []


class SinSquared(Fn1D):
    """``weight * sin(freq * (t - centre))^2``."""

    convex = None

    def __init__(self, weight: float, freq: float, centre: float):
        self.w, self.p, self.c = float(weight), float(freq), float(centre)

    def f(self, t):
        return self.w * np.sin(self.p * (np.asarray(t, dtype=float) - self.c)) ** 2

    def df(self, t):
        return self.w * self.p * np.sin(2.0 * self.p * (np.asarray(t, dtype=float) - self.c))

    def d2(self, t):
        return 2.0 * self.w * self.p**2 * np.cos(2.0 * self.p * (np.asarray(t, dtype=float) - self.c))

    def _points(self, lo, hi, offset):
        # zeros of sin/cos(2 p (t - c)) in t
        step = math.pi / (2.0 * abs(self.p))
        pts = _lattice(lo - self.c, hi - self.c, offset * step, step)
        return [self.c + q for q in pts]

    def inflections(self, lo, hi):
        if self.p == 0.0:
            return []
        return self._points(lo, hi, 0.5)

    def critical_points(self, lo, hi):
        if self.p == 0.0:
            return []
        return self._points(lo, hi, 0.0)


class Affine(Fn1D):
    """``slope * t + offset``; bounded exactly by itself."""

    convex = True
    monotone = True

    def __init__(self, slope: float, offset: float = 0.0):
        self.s, self.o = float(slope), float(offset)

    def f(self, t):
        return self.s * np.asarray(t, dtype=float) + self.o

    def df(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.s)

    def d2(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))


def _lattice(lo: float, hi: float, offset: float, step: float) -> list[float]:
    """Points ``offset + k*step`` strictly inside ``(lo, hi)``."""
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
        return []
    k0 = math.floor((lo - offset) / step) + 1
    out = []
    k = k0
    while True:
        v = offset + k * step
        if v >= hi:
            break
        if v > lo:
            out.append(v)
        k += 1
        if len(out) > 10000:
            raise ValueError("interval spans too many periods")
    return out
