"""Random model and region generators shared by the test modules."""

import numpy as np

from gpcert.bounds import Region
from gpcert.kernels import Matern, Periodic, Product, RationalQuadratic, SquaredExponential, Sum
from gpcert.model import GpModel, fit_laplace_binary, fit_regression

FAMILIES = ("se", "rq", "matern", "periodic", "sum", "product")


def random_kernel(rng, d, family):
    var = rng.uniform(0.5, 2.0)
    theta = rng.uniform(0.3, 3.0, d)
    if family == "se":
        return SquaredExponential(var, theta)
    if family == "rq":
        return RationalQuadratic(var, theta, rng.uniform(0.5, 3.0))
    if family == "matern":
        return Matern(var, theta, 1)
    if family == "periodic":
        return Periodic(var, theta, rng.uniform(0.5, 2.0, d))
    if family == "sum":
        return Sum([SquaredExponential(var, theta), Matern(1.0, rng.uniform(0.3, 3.0, d), 2)],
                   rng.uniform(0.2, 1.0, 2))
    if family == "product":
        return Product(SquaredExponential(var, theta), Periodic(1.0, rng.uniform(0.3, 2.0, d), rng.uniform(0.5, 2.0, d)))
    raise ValueError(family)


def random_labels(rng, X):
    """Labels from the sign of a random smooth function, both classes present."""
    w = rng.normal(size=X.shape[1])
    f = np.sin(2.0 * X @ w + rng.uniform(0, 2 * np.pi))
    y = np.where(f >= 0, 1.0, -1.0)
    if np.unique(y).size < 2:
        y[0] = -y[0]
    return y


def binary_model(rng, d=None, N=None, family=None, link=None):
    d = d or int(rng.integers(1, 4))
    N = N or int(rng.integers(4, 21))
    family = family or FAMILIES[int(rng.integers(len(FAMILIES)))]
    link = link or ("probit", "logistic")[int(rng.integers(2))]
    X = rng.uniform(-1, 1, (N, d))
    return fit_laplace_binary(X, random_labels(rng, X), random_kernel(rng, d, family), link)


def regression_model(rng, d=None, N=None, family="se"):
    d = d or int(rng.integers(1, 3))
    N = N or int(rng.integers(2, 11))
    X = rng.uniform(-1, 1, (N, d))
    y = np.sin(3.0 * X @ rng.normal(size=d)) + 0.1 * rng.normal(size=N)
    return fit_regression(X, y, random_kernel(rng, d, family), rng.uniform(0.01, 0.2))


def multiclass_toy(rng, N=8, d=2, m=3):
    """Ingested softmax model with per-class SE kernels and coupled posterior blocks."""
    X = rng.uniform(-1, 1, (N, d))
    ks = [SquaredExponential(rng.uniform(0.5, 2), rng.uniform(0.3, 2, d)) for _ in range(m)]
    Kb = np.zeros((m * N, m * N))
    for c, k in enumerate(ks):
        Kb[c * N:(c + 1) * N, c * N:(c + 1) * N] = k(X, X)
    A = rng.normal(size=(m * N, m * N)) * 0.5
    W = A @ A.T / (m * N)
    w, U = np.linalg.eigh(W)
    sW = (U * np.sqrt(np.maximum(w, 0))) @ U.T
    S = sW @ np.linalg.inv(np.eye(m * N) + sW @ Kb @ sW) @ sW
    t = rng.normal(size=(m, N)) * 1.5
    return GpModel(ks, X, 0.5 * (S + S.T), t, "multiclass", "softmax")


def random_region(rng, d, max_width=0.6):
    c = rng.uniform(-1, 1, d)
    w = rng.uniform(0.02, max_width, d)
    return Region(c - w / 2, c + w / 2)


def grid(region, total=10**4):
    """About ``total`` points on a regular grid over the region."""
    per = max(2, int(round(total ** (1.0 / region.d))))
    return region.grid(per)


# One summary line per acceptance criterion, printed at the end of the session.
CRITERIA = []


def record(label, ok, detail):
    line = f"{label}: {'PASS' if ok else 'FAIL'} ({detail})"
    CRITERIA.append(line)
    print(line)
    return ok
