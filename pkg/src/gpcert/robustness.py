"""Robustness verdicts, metrics and the gradient-sign attack baseline."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .bnb import (
    BnbConfig,
    BnbResult,
    maximize_posterior_mean,
    maximize_prediction,
    minimize_posterior_mean,
    minimize_prediction,
)
from .bounds import Region
from .model import GpModel

__all__ = [
    "Status",
    "SafetyVerdict",
    "InterpretabilityReport",
    "ball_region",
    "predicted_class",
    "certify_classification",
    "certify_regression",
    "delta_metric",
    "interpretability_delta",
    "gpfgs_attack",
    "adversarial_gap_curve",
    "safety_curve",
]


class Status(str, enum.Enum):
    CERTIFIED = "certified"
    FALSIFIED = "falsified"
    UNKNOWN = "unknown"


@dataclass
class SafetyVerdict:
    status: Status
    gamma: float
    norm: str = "inf"
    predicted: int | None = None
    pi_star: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    witness: np.ndarray | None = None
    gap: float = 0.0
    note: str = ""

    def to_dict(self) -> dict:
        def arr(v):
            return None if v is None else np.asarray(v, dtype=float).tolist()

        return {
            "status": self.status.value,
            "gamma": self.gamma,
            "norm": self.norm,
            "predicted": self.predicted,
            "pi_star": arr(self.pi_star),
            "lower": arr(self.lower),
            "upper": arr(self.upper),
            "witness": arr(self.witness),
            "gap": self.gap,
            "note": self.note,
        }


@dataclass
class InterpretabilityReport:
    values: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    gamma: float
    dims: list = field(default_factory=list)


def ball_region(x, gamma: float, norm: str = "inf") -> Region:
    """Box enclosing the ``norm`` ball; exact for the max-norm."""
    if norm not in ("inf", "2", "1"):
        raise ValueError("norm must be 'inf', '2' or '1'")
    return Region.ball(np.asarray(x, dtype=float), gamma)


def predicted_class(model: GpModel, x) -> int:
    return int(np.argmax(model.class_prob(np.atleast_2d(x))[0]))


def _decision(model, pts):
    return np.argmax(model.class_prob(np.atleast_2d(pts)), axis=1)


def certify_classification(model: GpModel, x, gamma: float, config: BnbConfig = BnbConfig(),
                           norm: str = "inf") -> SafetyVerdict:
    """Decide whether the predicted class at ``x`` is constant over the ball.

    Certification uses the sufficient condition that the certified minimum of
    the predicted class beats the certified maximum of every other class.
    A falsifying witness is confirmed by direct evaluation.
    """
    x = np.asarray(x, dtype=float)
    c = predicted_class(model, x)
    n_cls = 2 if model.task == "binary" else model.m
    region = ball_region(x, gamma, norm)
    note = "" if norm == "inf" else f"{norm}-ball enclosed in its bounding box"
    lower, upper = np.zeros(n_cls), np.ones(n_cls)
    witnesses = []
    if model.task == "binary":
        run = minimize_prediction(model, region, c, replace(config, threshold=0.5))
        lower[c], upper[c] = run.lower, 1.0
        lower[1 - c], upper[1 - c] = 0.0, 1.0 - run.lower
        witnesses.append(run.witness)
        runs = [run]
    else:
        runs = []
        run = minimize_prediction(model, region, c, config)
        lower[c] = run.lower
        runs.append(run)
        witnesses.append(run.witness)
        for i in range(n_cls):
            if i == c:
                continue
            r = maximize_prediction(model, region, i, replace(config, threshold=lower[c]))
            upper[i] = r.upper
            runs.append(r)
            witnesses.append(r.witness)
    pi_star = upper.copy()
    pi_star[c] = lower[c]
    others = np.delete(pi_star, c)
    gap = float(others.max() - pi_star[c]) if others.size else 0.0
    for w in witnesses:
        if w is not None and _decision(model, w)[0] != c:
            return SafetyVerdict(Status.FALSIFIED, gamma, norm, c, pi_star, lower, upper,
                                 np.asarray(w), gap, note)
    if pi_star[c] > others.max():
        return SafetyVerdict(Status.CERTIFIED, gamma, norm, c, pi_star, lower, upper, None, gap, note)
    return SafetyVerdict(Status.UNKNOWN, gamma, norm, c, pi_star, lower, upper, None, gap, note)


def _norm(v, p):
    return float(np.linalg.norm(v, ord={"inf": np.inf, "2": 2, "1": 1}[p]))


def certify_regression(model: GpModel, x, gamma: float, delta: float, p: str = "inf",
                       config: BnbConfig = BnbConfig()) -> SafetyVerdict:
    """Check that every output mean stays within ``delta`` (in ``p``-norm) of its value at ``x``."""
    x = np.asarray(x, dtype=float)
    region = ball_region(x, gamma)
    m = model.m
    ref = np.array([float(model.mean(x[None, :], c)[0]) for c in range(m)])
    lo, hi = np.zeros(m), np.zeros(m)
    wits = []
    for c in range(m):
        cfg_lo = replace(config, threshold=ref[c] - delta) if m == 1 else config
        cfg_hi = replace(config, threshold=ref[c] + delta) if m == 1 else config
        r0 = minimize_posterior_mean(model, region, c, cfg_lo)
        r1 = maximize_posterior_mean(model, region, c, cfg_hi)
        lo[c], hi[c] = r0.lower, r1.upper
        wits += [r0.witness, r1.witness]
    # farthest certified corner from the reference value, per output
    star = np.where(np.abs(ref - lo) >= np.abs(ref - hi), lo, hi)
    dev = _norm(ref - star, p)
    for w in wits:
        if w is None:
            continue
        mw = np.array([float(model.mean(w[None, :], c)[0]) for c in range(m)])
        if _norm(mw - ref, p) > delta:
            return SafetyVerdict(Status.FALSIFIED, gamma, p, None, star, lo, hi, np.asarray(w),
                                 dev - delta)
    if dev <= delta:
        return SafetyVerdict(Status.CERTIFIED, gamma, p, None, star, lo, hi, None, dev - delta)
    return SafetyVerdict(Status.UNKNOWN, gamma, p, None, star, lo, hi, None, dev - delta)


def delta_metric(model: GpModel, x, gamma: float, config: BnbConfig = BnbConfig(), cls: int = 1):
    """Certified spread ``max - min`` of a class probability over the ball."""
    if model.task != "binary":
        raise ValueError("the spread metric is defined for binary models")
    region = ball_region(x, gamma)
    hi = maximize_prediction(model, region, cls, config)
    lo = minimize_prediction(model, region, cls, config)
    return float(np.clip(hi.upper - lo.lower, 0.0, 1.0))


def _one_sided(x, gamma, i):
    lo, hi = x.copy(), x.copy()
    if gamma >= 0:
        hi[i] += gamma
    else:
        lo[i] += gamma
    return Region(lo, hi)


def interpretability_delta(model: GpModel, x, gamma: float, dims=None,
                           config: BnbConfig = BnbConfig(), cls: int = 1) -> InterpretabilityReport:
    """Change of the max and min class probability between one-sided boxes.

    For each dimension ``i`` the value is
    ``(max T+ - max T-) + (min T+ - min T-)`` with ``T+ = [x, x + gamma e_i]``
    and ``T- = [x - gamma e_i, x]``; the midpoints of the branch-and-bound
    intervals are used, and the interval arithmetic enclosure is reported too.
    """
    x = np.asarray(x, dtype=float)
    dims = list(range(x.size)) if dims is None else list(dims)
    vals, los, his = [], [], []
    for i in dims:
        parts = {}
        for s in (+1, -1):
            reg = _one_sided(x, s * gamma, i)
            parts[s, "max"] = maximize_prediction(model, reg, cls, config)
            parts[s, "min"] = minimize_prediction(model, reg, cls, config)

        def mid(r: BnbResult):
            return 0.5 * (r.lower + r.upper)

        v = (mid(parts[1, "max"]) - mid(parts[-1, "max"])) + (mid(parts[1, "min"]) - mid(parts[-1, "min"]))
        lo = (parts[1, "max"].lower - parts[-1, "max"].upper) + (parts[1, "min"].lower - parts[-1, "min"].upper)
        hi = (parts[1, "max"].upper - parts[-1, "max"].lower) + (parts[1, "min"].upper - parts[-1, "min"].lower)
        vals.append(v)
        los.append(max(lo, -2.0))
        his.append(min(hi, 2.0))
    return InterpretabilityReport(np.array(vals), np.array(los), np.array(his), gamma, dims)


def _attack_score(model: GpModel, c: int):
    """Latent margin of the predicted class; the attack drives it down."""
    if model.task == "binary":
        sign = 1.0 if c == 1 else -1.0
        return lambda X: sign * model.mean(X, 0)

    def score(X):
        mu = np.stack([model.mean(X, k) for k in range(model.m)], axis=1)
        rival = np.max(np.delete(mu, c, axis=1), axis=1)
        return mu[:, c] - rival

    return score


def gpfgs_attack(model: GpModel, x, gamma: float, steps: int = 20, h: float = 1e-6):
    """Gradient-sign steps on the latent mean towards the opposing class.

    Each step moves every coordinate by ``gamma / steps`` against the sign
    of the finite-difference gradient of the predicted-class margin, clipped
    to the max-norm ball.  Returns ``(point, success)``; success means some
    iterate changes the predicted class.
    """
    x0 = np.asarray(x, dtype=float)
    if gamma <= 0 or steps < 1:
        return x0.copy(), False
    region = Region.ball(x0, gamma)
    c = predicted_class(model, x0)
    score = _attack_score(model, c)
    eta = gamma / steps
    xk = x0.copy()
    d = x0.size
    for _ in range(steps):
        E = np.eye(d) * h * np.maximum(1.0, np.abs(xk))[:, None]
        g = (score(xk + E) - score(xk - E)) / (2.0 * np.diag(E))
        xk = region.clip(xk - eta * np.sign(g))
        if predicted_class(model, xk) != c:
            return xk, True
    return xk, False


def adversarial_gap_curve(model: GpModel, x, features, gamma: float, budgets=None,
                          config: BnbConfig = BnbConfig(), true_class: int | None = None):
    """Certified lower bound on the worst-case class margin as more features move.

    For budget ``beta`` the first ``beta`` entries of ``features`` range over
    ``[x_j - gamma, x_j + gamma]`` and the rest stay fixed.  Each row is
    ``(beta, lower, upper, witness)``: ``lower`` bounds the minimum margin
    from below and ``upper`` is the margin at the best witness.  Regions are
    nested, so both columns are made non-increasing by carrying the previous
    row forward, which keeps them sound.
    """
    x = np.asarray(x, dtype=float)
    features = list(features)
    c = predicted_class(model, x) if true_class is None else true_class
    budgets = range(len(features) + 1) if budgets is None else budgets
    rows = []
    prev_lo, prev_hi, prev_w = np.inf, np.inf, None
    for beta in budgets:
        lo_x, hi_x = x.copy(), x.copy()
        idx = features[:beta]
        lo_x[idx] -= gamma
        hi_x[idx] += gamma
        reg = Region(lo_x, hi_x)
        p_x = model.class_prob(x[None, :])[0]
        if beta == 0:
            margin = float(p_x[c] - np.max(np.delete(p_x, c)))
            lo, hi, w = margin, margin, x.copy()
        elif model.task == "binary":
            r = minimize_prediction(model, reg, c, config)
            lo, hi, w = 2.0 * r.lower - 1.0, 2.0 * r.upper - 1.0, r.witness
        else:
            r = minimize_prediction(model, reg, c, config)
            rival = [maximize_prediction(model, reg, i, config) for i in range(model.m) if i != c]
            lo = r.lower - max(q.upper for q in rival)
            w = r.witness
            p_w = model.class_prob(w[None, :])[0]
            hi = float(p_w[c] - np.max(np.delete(p_w, c)))
        if hi > prev_hi:
            hi, w = prev_hi, prev_w
        lo = min(lo, prev_lo, hi)
        rows.append((int(beta), float(lo), float(hi), np.asarray(w)))
        prev_lo, prev_hi, prev_w = lo, hi, w
    return rows


def safety_curve(model: GpModel, x, gammas, config: BnbConfig = BnbConfig(), cls: int | None = None):
    """Certified ``(gamma, lower, upper)`` of the minimum class probability over growing balls.

    The balls are nested, so the lower bound at a radius may be replaced by the
    smaller lower bound of any smaller radius (still sound) and the witness
    value may be taken from any smaller radius; both columns are therefore
    non-increasing in ``gamma``.
    """
    x = np.asarray(x, dtype=float)
    c = predicted_class(model, x) if cls is None else cls
    rows = []
    lo_run, hi_run = np.inf, np.inf
    for g in sorted(gammas):
        r = minimize_prediction(model, Region.ball(x, g), c, config)
        hi_run = min(hi_run, r.upper)
        lo_run = min(lo_run, r.lower, hi_run)
        rows.append((float(g), float(lo_run), float(hi_run)))
    return rows
