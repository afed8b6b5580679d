"""Minimal interval arithmetic on ``(lo, hi)`` array pairs.

Infinite endpoints are allowed; the product ``0 * inf`` is taken as 0, which
is the correct limit for enclosures of bounded quantities multiplied by
unbounded ones.
"""

from __future__ import annotations

import numpy as np

__all__ = ["SingularIntervalMatrix", "imul", "iadd", "isub", "imatmul", "iinv", "hull"]


class SingularIntervalMatrix(ArithmeticError):
    """Interval Gaussian elimination met a pivot interval containing zero."""


def _prod(a, b):
    with np.errstate(invalid="ignore"):
        p = a * b
    return np.where(np.isnan(p), 0.0, p)


def imul(alo, ahi, blo, bhi):
    c = np.stack([_prod(alo, blo), _prod(alo, bhi), _prod(ahi, blo), _prod(ahi, bhi)])
    return c.min(axis=0), c.max(axis=0)


def iadd(alo, ahi, blo, bhi):
    with np.errstate(invalid="ignore"):
        return alo + blo, ahi + bhi


def isub(alo, ahi, blo, bhi):
    with np.errstate(invalid="ignore"):
        return alo - bhi, ahi - blo


def hull(*intervals):
    lo = np.minimum.reduce([iv[0] for iv in intervals])
    hi = np.maximum.reduce([iv[1] for iv in intervals])
    return lo, hi


def imatmul(Alo, Ahi, Blo, Bhi):
    """Enclosure of ``A @ B`` for interval matrices (or vectors as 2-D)."""
    plo, phi = imul(Alo[:, :, None], Ahi[:, :, None], Blo[None, :, :], Bhi[None, :, :])
    return plo.sum(axis=1), phi.sum(axis=1)


def _idiv(alo, ahi, blo, bhi):
    if np.any((blo <= 0) & (bhi >= 0)):
        raise SingularIntervalMatrix("division by an interval containing zero")
    return imul(alo, ahi, 1.0 / bhi, 1.0 / blo)


def _igauss_solve(Mlo, Mhi, Blo, Bhi):
    """Interval Gaussian elimination for ``M X = B`` (no pivoting; ``M`` near identity)."""
    Mlo, Mhi = Mlo.copy(), Mhi.copy()
    Blo, Bhi = Blo.copy(), Bhi.copy()
    n = Mlo.shape[0]
    for k in range(n):
        plo, phi = Mlo[k, k], Mhi[k, k]
        if plo <= 0 <= phi:
            raise SingularIntervalMatrix("pivot interval contains zero")
        for i in range(k + 1, n):
            flo, fhi = _idiv(Mlo[i, k], Mhi[i, k], plo, phi)
            rlo, rhi = imul(flo, fhi, Mlo[k, k + 1 :], Mhi[k, k + 1 :])
            Mlo[i, k + 1 :], Mhi[i, k + 1 :] = isub(Mlo[i, k + 1 :], Mhi[i, k + 1 :], rlo, rhi)
            rlo, rhi = imul(flo, fhi, Blo[k], Bhi[k])
            Blo[i], Bhi[i] = isub(Blo[i], Bhi[i], rlo, rhi)
    Xlo, Xhi = np.zeros_like(Blo), np.zeros_like(Bhi)
    for k in range(n - 1, -1, -1):
        slo, shi = Blo[k], Bhi[k]
        if k + 1 < n:
            tlo, thi = imul(Mlo[k, k + 1 :, None], Mhi[k, k + 1 :, None], Xlo[k + 1 :], Xhi[k + 1 :])
            slo, shi = isub(slo, shi, tlo.sum(axis=0), thi.sum(axis=0))
        Xlo[k], Xhi[k] = _idiv(slo, shi, Mlo[k, k], Mhi[k, k])
    return Xlo, Xhi


def iinv(Alo, Ahi):
    """Enclosure of ``{A^-1 : A in [Alo, Ahi]}``.

    Uses midpoint preconditioning: ``A^-1 = (C A)^-1 C`` with ``C = mid(A)^-1``.
    """
    Alo, Ahi = np.atleast_2d(Alo), np.atleast_2d(Ahi)
    mid = 0.5 * (Alo + Ahi)
    try:
        C = np.linalg.inv(mid)
    except np.linalg.LinAlgError as exc:
        raise SingularIntervalMatrix("midpoint matrix is singular") from exc
    CAlo, CAhi = imatmul(C, C, Alo, Ahi)
    n = Alo.shape[0]
    I = np.eye(n)
    Ylo, Yhi = _igauss_solve(CAlo, CAhi, I, I)
    return imatmul(Ylo, Yhi, C, C)
