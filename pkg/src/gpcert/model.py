"""GP models in the ``(S, t)`` form used by every bound.

Whatever the likelihood or approximation, the latent posterior is written as

    mean_c(x)      = k_c(x, X) . t_c
    cov_cd(x)      = delta_cd k_c(x, x) - k_c(x, X) S_cd k_d(x, X)^T

with per-class kernels ``k_c``, a weight matrix ``t`` of shape ``(m, N)`` and
a symmetric PSD block matrix ``S`` of shape ``(mN, mN)``.  Exact regression,
Laplace binary classification and externally trained (sparse, EP,
multi-class) models all fit this shape.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import expit, log_ndtr, ndtr

from .kernels import Kernel
from .solvers import sym_eigh

log = logging.getLogger(__name__)

__all__ = [
    "GpModel",
    "Posterior",
    "fit_regression",
    "fit_laplace_binary",
    "posterior_at",
    "predict_class_prob",
    "logistic_predictive",
    "probit_predictive",
    "softmax_predictive",
    "TrainingError",
]

TASKS = ("regression", "binary", "multiclass")
LINKS = {"regression": (None,), "binary": ("probit", "logistic"), "multiclass": ("softmax",)}

_GH_X, _GH_W = np.polynomial.hermite.hermgauss(64)


class TrainingError(RuntimeError):
    pass


@dataclass
class Posterior:
    mean: np.ndarray  # (m,)
    cov: np.ndarray  # (m, m)


@dataclass(eq=False)
class GpModel:
    kernels: list[Kernel]
    X: np.ndarray
    S: np.ndarray
    t: np.ndarray
    task: str = "regression"
    link: str | None = None
    lam: float = 1.0
    noise: float | None = None
    classes: list | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if isinstance(self.kernels, Kernel):
            self.kernels = [self.kernels]
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.t = np.atleast_2d(np.asarray(self.t, dtype=float))
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        m, N = self.t.shape
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.link not in LINKS[self.task]:
            raise ValueError(f"link {self.link!r} not valid for task {self.task!r}")
        if len(self.kernels) != m:
            raise ValueError("one kernel per latent output required")
        if self.X.shape[0] != N or S.shape != (m * N, m * N):
            raise ValueError("inconsistent shapes of X, S and t")
        if any(k.d != self.X.shape[1] for k in self.kernels):
            raise ValueError("kernel dimension does not match inputs")
        if self.lam <= 0:
            raise ValueError("probit scale must be positive")
        scale = max(1.0, float(np.abs(S).max(initial=0.0)))
        if np.abs(S - S.T).max(initial=0.0) > 1e-8 * scale:
            raise ValueError("S is not symmetric")
        S = 0.5 * (S + S.T)
        w, U = np.linalg.eigh(S) if S.size else (np.zeros(0), S)
        if w.size and w.min() < -1e-8 * scale:
            raise ValueError(f"S is not positive semidefinite (min eigenvalue {w.min():.3g})")
        if w.size and w.min() < 0:
            S = (U * np.maximum(w, 0.0)) @ U.T
            S = 0.5 * (S + S.T)
        self.S = S

    @property
    def m(self) -> int:
        return self.t.shape[0]

    @property
    def N(self) -> int:
        return self.t.shape[1]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def kernel(self) -> Kernel:
        return self.kernels[0]

    def block(self, c: int, e: int) -> np.ndarray:
        N = self.N
        return self.S[c * N : (c + 1) * N, e * N : (e + 1) * N]

    def eig(self, c: int = 0):
        """Cached eigenpairs of the diagonal block ``S_cc`` (eigenvalues clipped at 0)."""
        key = ("eig", c)
        if key not in self._cache:
            w, U = sym_eigh(self.block(c, c))
            self._cache[key] = (np.maximum(w, 0.0), U)
        return self._cache[key]

    # -- prediction -------------------------------------------------------

    def mean(self, Xs, c: int = 0):
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        return self.kernels[c](Xs, self.X) @ self.t[c]

    def variance(self, Xs, c: int = 0):
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        K = self.kernels[c](Xs, self.X)
        v = self.kernels[c].diag(Xs) - np.einsum("ni,ij,nj->n", K, self.block(c, c), K)
        return np.where(v < 0, np.where(v > -1e-10, 0.0, v), v)

    def moments(self, Xs):
        """Means ``(n, m)`` and covariances ``(n, m, m)`` at many points."""
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        Ks = [k(Xs, self.X) for k in self.kernels]
        mu = np.stack([K @ t for K, t in zip(Ks, self.t)], axis=1)
        n, m = Xs.shape[0], self.m
        cov = np.zeros((n, m, m))
        for c in range(m):
            cov[:, c, c] = self.kernels[c].diag(Xs)
            for e in range(m):
                cov[:, c, e] -= np.einsum("ni,ij,nj->n", Ks[c], self.block(c, e), Ks[e])
        for c in range(m):
            v = cov[:, c, c]
            cov[:, c, c] = np.where((v < 0) & (v > -1e-10), 0.0, v)
        return mu, cov

    def class_prob(self, Xs):
        """Predictive class probabilities, shape ``(n, n_classes)``.

        Binary models use columns ``[negative, positive]``.
        """
        if self.task == "regression":
            raise ValueError("class probabilities are undefined for regression models")
        mu, cov = self.moments(Xs)
        if self.task == "binary":
            if self.link == "probit":
                p = probit_predictive(mu[:, 0], cov[:, 0, 0], self.lam)
            else:
                p = logistic_predictive(mu[:, 0], cov[:, 0, 0])
            return np.column_stack([1.0 - p, p])
        return np.stack([softmax_predictive(mu[k], cov[k]) for k in range(mu.shape[0])])


# ---------------------------------------------------------------------------
# Predictive integrals
# ---------------------------------------------------------------------------


def probit_predictive(mu, var, lam=1.0):
    """``int Phi(lam f) N(f | mu, var) df = Phi(mu / sqrt(lam^-2 + var))``."""
    mu, var = np.asarray(mu, dtype=float), np.asarray(var, dtype=float)
    return ndtr(mu / np.sqrt(lam**-2 + np.maximum(var, 0.0)))


def logistic_predictive(mu, var):
    """``int sigmoid(f) N(f | mu, var) df`` by 64-node Gauss-Hermite quadrature."""
    mu, var = np.asarray(mu, dtype=float), np.asarray(var, dtype=float)
    f = mu[..., None] + np.sqrt(2.0 * np.maximum(var, 0.0))[..., None] * _GH_X
    return (expit(f) @ _GH_W) / np.sqrt(np.pi)


def gauss_hermite_expectation(fn, mu, cov, nodes=24):
    """``E[fn(f)]`` for ``f ~ N(mu, cov)`` by tensor Gauss-Hermite quadrature."""
    mu = np.asarray(mu, dtype=float)
    m = mu.size
    x, w = np.polynomial.hermite.hermgauss(nodes)
    grids = np.meshgrid(*([x] * m), indexing="ij")
    Z = np.stack([g.ravel() for g in grids], axis=1) * np.sqrt(2.0)
    W = np.ones(Z.shape[0])
    for g in np.meshgrid(*([w] * m), indexing="ij"):
        W = W * g.ravel()
    W = W / np.pi ** (m / 2.0)
    jitter = 0.0
    for _ in range(8):
        try:
            L = np.linalg.cholesky(cov + jitter * np.eye(m))
            break
        except np.linalg.LinAlgError:
            jitter = 1e-12 if jitter == 0 else jitter * 10
    else:
        w_, U_ = np.linalg.eigh(cov)
        L = U_ * np.sqrt(np.maximum(w_, 0.0))
    F = mu + Z @ L.T
    return W @ fn(F)


def _softmax(F):
    F = F - F.max(axis=-1, keepdims=True)
    E = np.exp(F)
    return E / E.sum(axis=-1, keepdims=True)


def softmax_predictive(mu, cov, nodes=None):
    """Softmax class probabilities under ``N(mu, cov)`` (quadrature reference)."""
    m = np.asarray(mu).size
    if nodes is None:
        nodes = {1: 64, 2: 64, 3: 32}.get(m, 12)
    return gauss_hermite_expectation(_softmax, mu, cov, nodes)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _cholesky_with_jitter(K):
    n = K.shape[0]
    scale = max(1.0, float(np.mean(np.diag(K))))
    for jitter in [0.0] + [10.0**e for e in range(-10, -3)]:
        try:
            return cho_factor(K + jitter * scale * np.eye(n), lower=True), jitter
        except np.linalg.LinAlgError:
            continue
    raise TrainingError("kernel matrix factorisation failed even with jitter 1e-4")


def fit_regression(X, y, kernel: Kernel, noise: float) -> GpModel:
    """Exact GP regression: ``S = (K + noise I)^-1``, ``t = S y``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 1 or X.shape[0] != y.size:
        raise ValueError("need at least one training point and one target per input")
    if noise <= 0:
        raise ValueError("noise variance must be positive")
    K = kernel(X, X) + noise * np.eye(X.shape[0])
    cf, jitter = _cholesky_with_jitter(K)
    if jitter:
        log.warning("regression fit needed jitter %.1e", jitter)
    S = cho_solve(cf, np.eye(X.shape[0]))
    t = cho_solve(cf, y)
    return GpModel([kernel], X, 0.5 * (S + S.T), t[None, :], "regression", None, noise=noise)


def _probit_derivs(f, y, lam):
    z = lam * y * f
    logp = log_ndtr(z)
    ratio = np.exp(-0.5 * z * z - logp) / np.sqrt(2.0 * np.pi)
    grad = lam * y * ratio
    W = lam * lam * (ratio * ratio + z * ratio)
    return logp.sum(), grad, W


def _logistic_derivs(f, y, lam):
    pi = expit(f)
    logp = -np.logaddexp(0.0, -y * f)
    grad = 0.5 * (y + 1.0) - pi
    W = pi * (1.0 - pi)
    return logp.sum(), grad, W


def fit_laplace_binary(X, y, kernel: Kernel, link: str = "probit", lam: float = 1.0,
                       tol: float = 1e-8, max_iter: int = 100) -> GpModel:
    """Laplace approximation for binary classification, labels in ``{-1, +1}``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if np.unique(y).size < 2:
        raise ValueError("both classes must be present")
    derivs = {"probit": _probit_derivs, "logistic": _logistic_derivs}[link]
    n = y.size
    K = kernel(X, X)
    f = np.zeros(n)
    obj_old = -np.inf
    for it in range(max_iter):
        logp, grad, W = derivs(f, y, lam)
        sW = np.sqrt(W)
        B = np.eye(n) + sW[:, None] * K * sW[None, :]
        L = np.linalg.cholesky(B)
        b = W * f + grad
        v = solve_triangular(L, sW * (K @ b), lower=True)
        a = b - sW * solve_triangular(L.T, v, lower=False)
        f_new = K @ a
        obj = -0.5 * a @ f_new + derivs(f_new, y, lam)[0]
        converged = abs(obj - obj_old) < tol * max(1.0, abs(obj))
        f, obj_old = f_new, obj
        if converged:
            break
    else:
        raise TrainingError("Newton iteration for the Laplace mode did not converge")
    _, grad, W = derivs(f, y, lam)
    sW = np.sqrt(W)
    B = np.eye(n) + sW[:, None] * K * sW[None, :]
    Binv = cho_solve(cho_factor(B, lower=True), np.eye(n))
    S = sW[:, None] * Binv * sW[None, :]
    return GpModel([kernel], X, 0.5 * (S + S.T), grad[None, :], "binary", link, lam=lam)


# ---------------------------------------------------------------------------
# Functional interface
# ---------------------------------------------------------------------------


def posterior_at(model: GpModel, x) -> Posterior:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != model.d:
        raise ValueError(f"point must have dimension {model.d}")
    mu, cov = model.moments(x[None, :])
    return Posterior(mu[0], cov[0])


def predict_class_prob(model: GpModel, x) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return model.class_prob(x[None, :])[0]
