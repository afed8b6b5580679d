"""Best-first branch and bound over boxes.

The engine minimises a function ``f`` over a union of boxes given a routine
that returns, for any box, a sound lower bound on ``f`` together with a few
candidate points.  Evaluating ``f`` at the candidates gives the upper bound.
Maximisation runs the same loop on ``-f``.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bounds import Region, mean_bounds_raw, moment_bounds, variance_lower_raw, variance_upper_raw
from .likelihood import (
    build_partition,
    binary_range_bounds,
    discretized_range_bounds,
    multiclass_range_bounds,
)
from .model import GpModel

__all__ = [
    "BnbConfig",
    "BnbResult",
    "split_region",
    "witness_candidates",
    "branch_and_bound",
    "minimize_prediction",
    "maximize_prediction",
    "minimize_posterior_mean",
    "maximize_posterior_mean",
    "prediction_bound",
]

SPLIT_RULES = ("random", "widest")


@dataclass(frozen=True)
class BnbConfig:
    """Tolerance, budgets and splitting policy.

    ``likelihood`` picks the closed-form corner bound (binary models only)
    or the latent-partition bound.  ``M`` is the number of partition cells
    per latent coordinate; by default ``ceil(2 / eps)``, reduced for softmax
    models so that ``M**m`` stays within ``max_cells``.  ``threshold`` ends
    the search as soon as the optimum is known to lie on one side of it.
    """

    eps: float = 0.01
    max_iter: int = 10_000
    max_time: float = math.inf
    split: str = "random"
    M: int | None = None
    seed: int = 0
    threshold: float | None = None
    method: str = "auto"
    likelihood: str = "closed"
    max_cells: int = 8000

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.split not in SPLIT_RULES:
            raise ValueError(f"split rule must be one of {SPLIT_RULES}")
        if self.M is not None and self.M < 1:
            raise ValueError("M must be at least 1")
        if self.likelihood not in ("closed", "discretized"):
            raise ValueError("likelihood must be 'closed' or 'discretized'")

    def cells(self, m: int = 1) -> int:
        """Partition size per latent coordinate for ``m`` latents."""
        if self.M is not None:
            return self.M
        M = int(np.ceil(2.0 / self.eps))
        if m > 1:
            M = min(M, max(1, int(np.floor(self.max_cells ** (1.0 / m) + 1e-9))))
        return M


@dataclass
class BnbResult:
    lower: float
    upper: float
    iterations: int
    regions: int
    time: float
    witness: np.ndarray | None
    converged: bool
    trace: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iter", "lower", "upper", "regions"])
        for row in self.trace:
            w.writerow([row[0], repr(row[1]), repr(row[2]), row[3]])
        return buf.getvalue()


def split_region(region: Region, rule: str = "random", rng=None):
    """Halve the region at the midpoint of one dimension."""
    w = region.widths
    ok = np.flatnonzero(w > 0)
    if ok.size == 0:
        raise ValueError("cannot split a zero-diameter region")
    if rule == "widest":
        j = int(ok[np.argmax(w[ok])])
    elif rule == "random":
        # width-weighted: a uniform pick lets best-first keep halving a
        # dimension that is already negligible, since those children keep
        # the parent's bound and stay at the top of the queue
        rng = np.random.default_rng() if rng is None else rng
        j = int(rng.choice(ok, p=w[ok] / w[ok].sum()))
    else:
        raise ValueError(f"unknown split rule {rule!r}")
    return region.split(j)


def witness_candidates(points, region: Region):
    """Project candidate points into the region, dedupe, and append the centre."""
    pts = [region.clip(np.asarray(p, dtype=float)) for p in points if p is not None]
    pts.append(region.center)
    arr = np.unique(np.round(np.array(pts), 15), axis=0)
    return arr


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------


def branch_and_bound(bound: Callable, value: Callable, regions, config: BnbConfig,
                     maximize: bool = False) -> BnbResult:
    """Generic loop.

    ``bound(region) -> (L, points)`` must satisfy ``L <= min_region f`` (or,
    with ``maximize``, ``L >= max_region f``); ``value(points) -> f`` is
    vectorised over rows.
    """
    sgn = -1.0 if maximize else 1.0
    regions = [regions] if isinstance(regions, Region) else list(regions)
    rng = np.random.default_rng(config.seed)
    t0 = time.perf_counter()

    heap = []
    counter = 0
    for r in regions:
        heap.append((-math.inf, counter, r))
        counter += 1
    heapq.heapify(heap)
    best_u, best_x = math.inf, None
    fathomed_l = math.inf
    trace = []
    it = 0

    def global_lower():
        q = heap[0][0] if heap else math.inf
        return min(q, fathomed_l)

    def natural(g_l):
        return (g_l, best_u) if not maximize else (-best_u, -g_l)

    while True:
        g_l = global_lower()
        if best_u - g_l <= config.eps or not heap:
            break
        lo, hi = natural(g_l)
        if config.threshold is not None and (lo >= config.threshold or hi < config.threshold):
            break
        if it >= config.max_iter or time.perf_counter() - t0 > config.max_time:
            break
        parent_l, _, reg = heapq.heappop(heap)
        it += 1
        own, pts = bound(reg)
        l_r = max(sgn * own, parent_l)
        cand = witness_candidates(pts, reg)
        vals = sgn * np.asarray(value(cand), dtype=float)
        k = int(np.argmin(vals))
        if vals[k] < best_u:
            best_u, best_x = float(vals[k]), cand[k]
        if best_u - l_r <= config.eps or reg.diam == 0:
            fathomed_l = min(fathomed_l, l_r)
        else:
            for child in split_region(reg, config.split, rng):
                heapq.heappush(heap, (l_r, counter, child))
                counter += 1
        lo, hi = natural(global_lower())
        trace.append((it, lo, hi, len(heap)))

    g_l = global_lower()
    lo, hi = natural(g_l)
    return BnbResult(
        lower=float(lo), upper=float(hi), iterations=it, regions=it,
        time=time.perf_counter() - t0, witness=best_x, converged=bool(best_u - g_l <= config.eps),
        trace=trace,
    )


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------


def _binary_single(model: GpModel, reg: Region, want_max_pos: bool, method: str):
    """Bound the positive-class probability from one mean bound and one variance bound."""
    k, X, t = model.kernels[0], model.X, model.t[0]
    S = model.block(0, 0)
    kb = k.bound(X, reg.lo, reg.hi)
    mu_L, mu_U, amin, amax = mean_bounds_raw(k, X, t, reg, kb)
    mu = mu_U if want_max_pos else mu_L
    # probit/logistic extremes pair the mean with the variance that pushes away from 1/2
    use_low_var = (mu >= 0) == want_max_pos
    if use_low_var:
        v, w = variance_lower_raw(k, X, S, model.eig(0), reg, method, kb=kb)
        mb = (mu, mu, v, v)
    else:
        v, w = variance_upper_raw(k, X, S, reg, method, kb)
        mb = (mu, mu, v, v)
    lo, hi = binary_range_bounds(mb, model.link, model.lam)
    pts = (amax if want_max_pos else amin) + [w]
    return (hi if want_max_pos else lo), pts


def prediction_bound(model: GpModel, reg: Region, i: int, upper: bool, config: BnbConfig):
    """Sound bound on ``min_reg pi_i`` (``upper=False``) or ``max_reg pi_i``, plus candidates."""
    if model.task == "regression":
        raise ValueError("prediction ranges need a classification model")
    if model.task == "binary" and config.likelihood == "closed":
        want_max_pos = upper == (i == 1)
        b, pts = _binary_single(model, reg, want_max_pos, config.method)
        if i == 0:
            b = 1.0 - b
        return b, pts
    mb = moment_bounds(model, reg, method=config.method)
    if model.task == "binary":
        part = build_partition(M=config.cells(), link=model.link, lam=model.lam)
        lo, hi = discretized_range_bounds(mb, part, i, model.link)
    else:
        lo, hi = multiclass_range_bounds(model, reg, config.cells(model.m), i, config.max_cells, mb=mb)
    return (hi if upper else lo), mb.witnesses


def _prob_value(model, i):
    return lambda pts: model.class_prob(pts)[:, i]


def minimize_prediction(model: GpModel, region, i: int, config: BnbConfig = BnbConfig()) -> BnbResult:
    """Certified bounds on ``min over region`` of the class-``i`` probability."""
    return branch_and_bound(lambda r: prediction_bound(model, r, i, False, config),
                            _prob_value(model, i), region, config)


def maximize_prediction(model: GpModel, region, i: int, config: BnbConfig = BnbConfig()) -> BnbResult:
    """Certified bounds on ``max over region`` of the class-``i`` probability."""
    return branch_and_bound(lambda r: prediction_bound(model, r, i, True, config),
                            _prob_value(model, i), region, config, maximize=True)


def _mean_bound(model, output, upper):
    def fn(reg):
        mu_L, mu_U, amin, amax = mean_bounds_raw(model.kernels[output], model.X, model.t[output], reg)
        return (mu_U, amax) if upper else (mu_L, amin)
    return fn


def minimize_posterior_mean(model: GpModel, region, output: int = 0,
                            config: BnbConfig = BnbConfig()) -> BnbResult:
    return branch_and_bound(_mean_bound(model, output, False),
                            lambda pts: model.mean(pts, output), region, config)


def maximize_posterior_mean(model: GpModel, region, output: int = 0,
                            config: BnbConfig = BnbConfig()) -> BnbResult:
    return branch_and_bound(_mean_bound(model, output, True),
                            lambda pts: model.mean(pts, output), region, config, maximize=True)
