"""Optimisation back ends used by the variance bounds.

* ``solve_lp``   -- linear programs ``min c.z  s.t. G z <= h, lb <= z <= ub``
  either through HiGHS (scipy) or a small dense revised simplex with
  Bland's rule.  Every result carries a *certified* lower bound obtained
  from weak duality, so downstream bounds never rely on solver tolerances.
* ``solve_qp``   -- convex quadratic programs via cvxopt's interior point
  method followed by an active-set polish on the KKT system.
* ``box_qp``     -- ``min r'Sr`` over a box (L-BFGS-B) with a certified
  lower bound from the convex linearisation.
* ``jacobi_eigh`` -- cyclic Jacobi eigensolver for symmetric matrices.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, minimize

log = logging.getLogger(__name__)

__all__ = [
    "LPResult",
    "QPResult",
    "SolverError",
    "dual_lower_bound",
    "solve_lp",
    "simplex",
    "solve_qp",
    "box_qp",
    "jacobi_eigh",
    "sym_eigh",
]


class SolverError(RuntimeError):
    pass


@dataclass
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    fun: float
    duals: np.ndarray | None = None
    certified: float = -np.inf  # provable lower bound on the optimum


@dataclass
class QPResult:
    x: np.ndarray
    fun: float
    duals: np.ndarray
    kkt_residual: float
    certified: float


def _box_min(g, lb, ub):
    """``min_{lb <= z <= ub} g.z`` for finite boxes."""
    return float(np.sum(np.minimum(g * lb, g * ub)))


def dual_lower_bound(c, G, h, lb, ub, y) -> float:
    """Weak-duality bound ``min (c + G'y).z - y.h`` over the box, for ``y >= 0``."""
    y = np.maximum(np.asarray(y, dtype=float), 0.0)
    if G is None or G.shape[0] == 0:
        return _box_min(np.asarray(c, float), lb, ub)
    g = c + G.T @ y
    return _box_min(g, lb, ub) - float(y @ h)


# ---------------------------------------------------------------------------
# Revised simplex
# ---------------------------------------------------------------------------


def simplex(c, G=None, h=None, lb=None, ub=None, max_iter=5000, tol=1e-11) -> LPResult:
    """Dense revised simplex with Bland's anti-cycling rule.

    Solves ``min c.z s.t. G z <= h, lb <= z <= ub`` with finite ``lb``.
    Finite upper bounds are turned into explicit rows.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    lb = np.zeros(n) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
    if np.any(~np.isfinite(lb)):
        raise ValueError("simplex requires finite lower bounds")
    if np.any(lb > ub):
        return LPResult("infeasible", None, np.inf)
    G0 = np.zeros((0, n)) if G is None else np.atleast_2d(np.asarray(G, dtype=float))
    h0 = np.zeros(0) if h is None else np.asarray(h, dtype=float)

    fin = np.isfinite(ub)
    rows = np.vstack([G0, np.eye(n)[fin]])
    rhs = np.concatenate([h0, (ub - lb)[fin]]) - np.concatenate([G0 @ lb, np.zeros(fin.sum())])
    m = rows.shape[0]
    # standard form over y = z - lb, slacks s, artificials a
    sign = np.where(rhs < 0, -1.0, 1.0)
    A = np.hstack([rows * sign[:, None], np.diag(sign)])
    b = rhs * sign
    need_art = sign < 0
    n_art = int(need_art.sum())
    art_cols = np.zeros((m, n_art))
    art_cols[np.flatnonzero(need_art), np.arange(n_art)] = 1.0
    A = np.hstack([A, art_cols])
    ntot = n + m + n_art
    basis = np.empty(m, dtype=int)
    basis[~need_art] = n + np.flatnonzero(~need_art)
    basis[need_art] = n + m + np.arange(n_art)

    def run(cost, basis, allowed):
        for _ in range(max_iter):
            B = A[:, basis]
            xB = np.linalg.solve(B, b)
            lam = np.linalg.solve(B.T, cost[basis])
            red = cost - A.T @ lam
            red[basis] = 0.0
            cand = np.flatnonzero((red < -tol) & allowed)
            if cand.size == 0:
                return basis, xB, lam, "optimal"
            e = int(cand[0])
            d = np.linalg.solve(B, A[:, e])
            pos = d > tol
            if not np.any(pos):
                return basis, xB, lam, "unbounded"
            ratios = np.full(m, np.inf)
            ratios[pos] = xB[pos] / d[pos]
            rmin = ratios.min()
            ties = np.flatnonzero(ratios <= rmin + tol * max(1.0, abs(rmin)))
            leave = ties[np.argmin(basis[ties])]
            basis = basis.copy()
            basis[leave] = e
        raise SolverError("simplex iteration cap exceeded")

    if n_art:
        cost1 = np.zeros(ntot)
        cost1[n + m :] = 1.0
        basis, xB, _, _ = run(cost1, basis, np.ones(ntot, dtype=bool))
        if float(cost1[basis] @ xB) > 1e-9 * max(1.0, np.abs(b).max()):
            return LPResult("infeasible", None, np.inf)
        # drive zero-level artificials out of the basis where possible
        for pos in np.flatnonzero(basis >= n + m):
            B = A[:, basis]
            row = np.linalg.solve(B.T, np.eye(m)[pos])
            coeffs = row @ A[:, : n + m]
            nb = [k for k in np.flatnonzero(np.abs(coeffs) > 1e-9) if k not in basis]
            if nb:
                basis[pos] = nb[0]
    cost2 = np.concatenate([c, np.zeros(m + n_art)])
    allowed = np.ones(ntot, dtype=bool)
    allowed[n + m :] = False
    basis, xB, lam, status = run(cost2, basis, allowed)
    if status == "unbounded":
        return LPResult("unbounded", None, -np.inf)
    y = np.zeros(ntot)
    y[basis] = xB
    z = y[:n] + lb
    # multipliers of the original "<=" rows (non-negative at optimality)
    duals = -(lam * sign)[: G0.shape[0]]
    res = LPResult("optimal", z, float(c @ z), duals)
    res.certified = _certify(c, G0, h0, lb, ub, res)
    return res


def _certify(c, G, h, lb, ub, res: LPResult) -> float:
    if not np.all(np.isfinite(ub)) or res.duals is None:
        return res.fun
    return min(res.fun, dual_lower_bound(c, G, h, lb, ub, res.duals))


def solve_lp(c, G=None, h=None, lb=None, ub=None, method="highs") -> LPResult:
    """``min c.z s.t. G z <= h, lb <= z <= ub``."""
    c = np.asarray(c, dtype=float)
    n = c.size
    lb = np.zeros(n) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
    if method == "simplex":
        return simplex(c, G, h, lb, ub)
    if method != "highs":
        raise ValueError(f"unknown LP method {method!r}")
    G0 = None if G is None or len(G) == 0 else np.asarray(G, dtype=float)
    out = linprog(
        c,
        A_ub=G0,
        b_ub=None if G0 is None else np.asarray(h, dtype=float),
        bounds=np.column_stack([lb, ub]),
        method="highs",
    )
    if out.status == 2:
        return LPResult("infeasible", None, np.inf)
    if out.status == 3:
        return LPResult("unbounded", None, -np.inf)
    if out.status != 0:
        raise SolverError(f"HiGHS failed: {out.message}")
    duals = -np.asarray(out.ineqlin.marginals) if G0 is not None else np.zeros(0)
    res = LPResult("optimal", np.asarray(out.x), float(out.fun), duals)
    Gc = np.zeros((0, n)) if G0 is None else G0
    hc = np.zeros(0) if G0 is None else np.asarray(h, dtype=float)
    res.certified = _certify(c, Gc, hc, lb, ub, res)
    return res


# ---------------------------------------------------------------------------
# Quadratic programs
# ---------------------------------------------------------------------------


def _kkt_residual(P, q, G, h, x, lam):
    stat = P @ x + q + G.T @ lam
    slack = h - G @ x
    return float(
        max(
            np.abs(stat).max(initial=0.0),
            np.maximum(-slack, 0.0).max(initial=0.0),
            np.maximum(-lam, 0.0).max(initial=0.0),
            np.abs(lam * slack).max(initial=0.0),
        )
    )


def _polish(P, q, G, h, x, lam, max_rounds=20):
    """Refine an interior-point solution by solving the KKT system on its active set."""
    n = x.size
    slack = h - G @ x
    scale = 1.0 + np.abs(h)
    active = np.flatnonzero((slack <= 1e-6 * scale) & (lam >= 1e-9 * max(1.0, np.abs(lam).max(initial=0.0))))
    best = (x, lam, _kkt_residual(P, q, G, h, x, lam))
    for _ in range(max_rounds):
        Ga = G[active]
        k = len(active)
        K = np.block([[P, Ga.T], [Ga, np.zeros((k, k))]])
        rhs = np.concatenate([-q, h[active]])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        xn, la = sol[:n], sol[n:]
        if np.any(la < -1e-12):
            active = np.delete(active, int(np.argmin(la)))
            continue
        lamn = np.zeros_like(lam)
        lamn[active] = np.maximum(la, 0.0)
        viol = G @ xn - h
        if np.any(viol > 1e-12 * scale):
            worst = int(np.argmax(viol / scale))
            if worst in active:
                break
            active = np.append(active, worst)
            continue
        r = _kkt_residual(P, q, G, h, xn, lamn)
        if r < best[2]:
            best = (xn, lamn, r)
        break
    return best


def solve_qp(P, q, G, h, lb=None, ub=None, certify=True) -> QPResult:
    """``min 1/2 z'Pz + q.z  s.t. G z <= h, lb <= z <= ub`` (``P`` PSD)."""
    from cvxopt import matrix, solvers

    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.size
    G = np.zeros((0, n)) if G is None else np.atleast_2d(np.asarray(G, dtype=float))
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float)
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
    fl, fu = np.isfinite(lb), np.isfinite(ub)
    Gf = np.vstack([G, -np.eye(n)[fl], np.eye(n)[fu]])
    hf = np.concatenate([h, -lb[fl], ub[fu]])
    # fixed variables make the interior empty; pin them through the box rows only
    opts = {"show_progress": False, "abstol": 1e-12, "reltol": 1e-12, "feastol": 1e-12, "maxiters": 200}
    sol = solvers.qp(matrix(P), matrix(q), matrix(Gf), matrix(hf), options=opts)
    if sol["status"] not in ("optimal", "unknown") or sol["x"] is None:
        raise SolverError(f"QP solver failed: {sol['status']}")
    x = np.asarray(sol["x"]).ravel()
    lam = np.maximum(np.asarray(sol["z"]).ravel(), 0.0)
    res = _kkt_residual(P, q, Gf, hf, x, lam)
    if res > 1e-10:
        x, lam, res = _polish(P, q, Gf, hf, x, lam)
    fun = float(0.5 * x @ P @ x + q @ x)
    out = QPResult(x, fun, lam, res, -np.inf)
    if certify:
        out.certified = qp_certificate(P, q, G, h, lb, ub, x)
    return out


def qp_certificate(P, q, G, h, lb, ub, x) -> float:
    """Provable lower bound on a convex QP from linearisation at ``x``."""
    xc = np.clip(x, lb, ub)
    g = P @ xc + q
    f0 = float(0.5 * xc @ P @ xc + q @ xc)
    lin = solve_lp(g, G, h, lb, ub)
    if lin.status != "optimal":
        raise SolverError("linearised QP certificate LP failed")
    return f0 + lin.certified - float(g @ xc)


def box_qp(S, lo, hi):
    """``min r'Sr`` over ``lo <= r <= hi``; returns ``(certified lower, value, argmin)``."""
    S = np.asarray(S, dtype=float)
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    x0 = np.clip(np.zeros_like(lo), lo, hi)

    def fg(r):
        Sr = S @ r
        return float(r @ Sr), 2.0 * Sr

    out = minimize(fg, x0, jac=True, method="L-BFGS-B", bounds=list(zip(lo, hi)),
                   options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 500})
    r = np.clip(out.x, lo, hi)
    f, g = fg(r)
    lower = f + _box_min(g, lo, hi) - float(g @ r)
    return max(lower, 0.0), f, r


# ---------------------------------------------------------------------------
# Symmetric eigenproblems
# ---------------------------------------------------------------------------


def jacobi_eigh(S, tol=1e-12, max_sweeps=100):
    """Cyclic Jacobi rotations; returns ascending eigenvalues and eigenvectors."""
    A = np.array(S, dtype=float, copy=True)
    n = A.shape[0]
    if not np.allclose(A, A.T, atol=1e-10 * max(1.0, np.abs(A).max(initial=0.0))):
        raise ValueError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    norm = np.linalg.norm(A)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(A, 1) ** 2))
        if off <= tol * max(norm, 1e-300):
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                apr = A[p, r]
                if abs(apr) < 1e-300:
                    continue
                theta = (A[r, r] - A[p, p]) / (2.0 * apr)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                cs = 1.0 / np.sqrt(t * t + 1.0)
                sn = t * cs
                Ap, Ar = A[:, p].copy(), A[:, r].copy()
                A[:, p] = cs * Ap - sn * Ar
                A[:, r] = sn * Ap + cs * Ar
                Ap, Ar = A[p, :].copy(), A[r, :].copy()
                A[p, :] = cs * Ap - sn * Ar
                A[r, :] = sn * Ap + cs * Ar
                Vp, Vr = V[:, p].copy(), V[:, r].copy()
                V[:, p] = cs * Vp - sn * Vr
                V[:, r] = sn * Vp + cs * Vr
    else:
        raise SolverError("Jacobi eigensolver did not converge")
    w = np.diag(A).copy()
    order = np.argsort(w)
    return w[order], V[:, order]


def sym_eigh(S, jacobi_max=64):
    """Eigen-decomposition with Jacobi for small matrices, LAPACK otherwise."""
    S = np.asarray(S, dtype=float)
    if S.shape[0] <= jacobi_max:
        return jacobi_eigh(S)
    return np.linalg.eigh(0.5 * (S + S.T))
