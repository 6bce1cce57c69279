"""Exact GP regression with cached Cholesky and one-step updates.

Model: y = f(x) + eps, f ~ GP(c, k), eps ~ N(0, noise). With
A_n = K(X, X) + noise I the posterior is

    m_n(x)     = c + k(x, X) A_n^{-1} (y - c)
    v_n(x, x') = k(x, x') - k(x, X) A_n^{-1} k(X, x')

and observing a further (x+, y+) changes it by

    beta(x)    = v_n(x, x+) / tau2,   tau2 = v_n(x+) + noise
    m_{n+1}(x) = m_n(x) + beta(x) (y+ - m_n(x+))
    v_{n+1}(x) = v_n(x) - v_n(x, x+)^2 / tau2

(the variance update does not involve y+).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import bisect
from scipy.special import lambertw

MAD_SCALE = 1.4826


class IllConditionedKernelError(np.linalg.LinAlgError):
    pass


class InsufficientDataError(ValueError):
    pass


def _as_inputs(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(-1, 1)
    return X


def _sqdist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)


# --------------------------------------------------------------------------
# kernels


def matern_correlation(r, nu: float) -> np.ndarray:
    """Matern correlation kappa_nu(r) for nu in {1.5, 2.5} (r already scaled)."""
    r = np.asarray(r, dtype=float)
    if nu == 1.5:
        s = np.sqrt(3.0) * r
        return (1.0 + s) * np.exp(-s)
    if nu == 2.5:
        s = np.sqrt(5.0) * r
        return (1.0 + s + s * s / 3.0) * np.exp(-s)
    raise ValueError("only nu = 1.5 and nu = 2.5 are supported")


@dataclass(frozen=True)
class RBF:
    lengthscale: float = 1.0
    variance: float = 1.0

    def __call__(self, A, B) -> np.ndarray:
        A, B = _as_inputs(A), _as_inputs(B)
        return self.variance * np.exp(-0.5 * _sqdist(A, B) / self.lengthscale**2)

    def diag(self, A) -> np.ndarray:
        return np.full(_as_inputs(A).shape[0], self.variance)


@dataclass(frozen=True)
class Linear:
    variance: float = 1.0

    def __call__(self, A, B) -> np.ndarray:
        A, B = _as_inputs(A), _as_inputs(B)
        return self.variance * A @ B.T

    def diag(self, A) -> np.ndarray:
        A = _as_inputs(A)
        return self.variance * (A * A).sum(1)


@dataclass(frozen=True)
class Matern:
    nu: float = 1.5
    lengthscale: float = 1.0
    variance: float = 1.0

    def __post_init__(self):
        if self.nu not in (1.5, 2.5):
            raise ValueError("only nu = 1.5 and nu = 2.5 are supported")

    def __call__(self, A, B) -> np.ndarray:
        A, B = _as_inputs(A), _as_inputs(B)
        r = np.sqrt(_sqdist(A, B)) / self.lengthscale
        return self.variance * matern_correlation(r, self.nu)

    def diag(self, A) -> np.ndarray:
        return np.full(_as_inputs(A).shape[0], self.variance)


@dataclass(frozen=True)
class Sum:
    parts: tuple

    def __init__(self, parts: Sequence):
        object.__setattr__(self, "parts", tuple(parts))

    def __call__(self, A, B) -> np.ndarray:
        return sum(k(A, B) for k in self.parts)

    def diag(self, A) -> np.ndarray:
        return sum(k.diag(A) for k in self.parts)


# --------------------------------------------------------------------------
# posterior


@dataclass(frozen=True)
class OneStepUpdate:
    beta: np.ndarray      # per context
    tau_sq: float
    v_next: np.ndarray    # per context
    cross_cov: np.ndarray  # s_n(c, x+) per context


@dataclass(frozen=True, eq=False)
class GpPosterior:
    kernel: object
    mean_const: float
    noise: float
    X: np.ndarray
    y: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def _solve_half(self, Xq: np.ndarray) -> np.ndarray:
        """L^{-1} k(X_n, Xq), shape (n, q)."""
        if self.n == 0:
            return np.zeros((0, Xq.shape[0]))
        return solve_triangular(self.chol, self.kernel(self.X, Xq), lower=True)

    def _check(self, Xq) -> np.ndarray:
        Xq = _as_inputs(Xq)
        if self.n and Xq.shape[1] != self.X.shape[1]:
            raise ValueError(f"expected inputs with {self.X.shape[1]} columns, got {Xq.shape[1]}")
        return Xq

    def predict(self, Xq):
        """Latent predictive means and variances m_n(x), v_n(x)."""
        Xq = self._check(Xq)
        mean = np.full(Xq.shape[0], self.mean_const)
        var = self.kernel.diag(Xq).astype(float)
        if self.n:
            mean = mean + self.kernel(Xq, self.X) @ self.alpha
            V = self._solve_half(Xq)
            var = var - (V * V).sum(0)
        return mean, var

    def cov(self, A, B) -> np.ndarray:
        """Posterior covariance v_n(A, B), shape (|A|, |B|)."""
        A, B = self._check(A), self._check(B)
        out = self.kernel(A, B)
        if self.n:
            out = out - self._solve_half(A).T @ self._solve_half(B)
        return out

    def cross_cov(self, C, x_plus) -> np.ndarray:
        """s_n(C, x+) for a single candidate; shape (|C|,)."""
        return self.cov(C, _as_inputs(x_plus)[:1])[:, 0]

    def one_step_update(self, x_plus, C) -> OneStepUpdate:
        C = self._check(C)
        x_plus = self._check(x_plus)[:1]
        s = self.cov(C, x_plus)[:, 0]
        _, v_plus = self.predict(x_plus)
        tau_sq = float(v_plus[0] + self.noise)
        _, v_c = self.predict(C)
        return OneStepUpdate(s / tau_sq, tau_sq, v_c - s * s / tau_sq, s)

    def updated_mean(self, x_plus, y_plus: float, C) -> np.ndarray:
        """m_{n+1}(C) after observing (x+, y+), without refitting."""
        upd = self.one_step_update(x_plus, C)
        m_c, _ = self.predict(C)
        m_plus, _ = self.predict(x_plus)
        return m_c + upd.beta * (y_plus - m_plus[0])


def fit(kernel, mean_const: float, noise: float, X, y, max_jitter_rel: float = 1e-4) -> GpPosterior:
    """Condition the GP on (X, y), retrying Cholesky with growing jitter.

    Jitter starts at 1e-10 * mean(diag) and doubles up to ``max_jitter_rel``
    times the mean diagonal. An empty training set gives the prior.
    """
    if not noise > 0:
        raise ValueError("noise variance must be positive")
    X = _as_inputs(X)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y lengths differ")
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise ValueError("non-finite training data")
    n = X.shape[0]
    if n == 0:
        return GpPosterior(kernel, float(mean_const), float(noise), X, y, np.zeros((0, 0)), np.zeros(0))
    A = kernel(X, X) + noise * np.eye(n)
    scale = float(np.mean(np.diag(A)))
    jitter = 1e-10 * scale
    while True:
        try:
            L = np.linalg.cholesky(A + jitter * np.eye(n))
            break
        except np.linalg.LinAlgError:
            jitter *= 2.0
            if jitter > max_jitter_rel * scale:
                raise IllConditionedKernelError(
                    f"Cholesky failed with jitter up to {max_jitter_rel:g} x mean diagonal"
                ) from None
    r = y - mean_const
    alpha = solve_triangular(L.T, solve_triangular(L, r, lower=True), lower=False)
    return GpPosterior(kernel, float(mean_const), float(noise), X, y, L, alpha, jitter)


# --------------------------------------------------------------------------
# standardisation and plug-in hyperparameters


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = _as_inputs(X)
        sd = X.std(axis=0)
        sd[sd == 0] = 1.0
        return cls(X.mean(axis=0), sd)

    def __call__(self, X) -> np.ndarray:
        return (_as_inputs(X) - self.mean) / self.scale


@dataclass(frozen=True)
class Hyperparameters:
    mean_const: float
    noise: float
    linear_variance: float
    matern_variance: float
    lengthscale: float
    nu: float = 1.5

    def kernel(self) -> Sum:
        return Sum([Linear(self.linear_variance), Matern(self.nu, self.lengthscale, self.matern_variance)])


def _nearest_neighbours(X: np.ndarray):
    d = np.sqrt(_sqdist(X, X))
    np.fill_diagonal(d, np.inf)
    j = np.argmin(d, axis=1)  # ties go to the lowest index
    return j, d[np.arange(len(X)), j]


def matern_lengthscale(r0: float, nu: float, rho: float = 0.5) -> float:
    """Length-scale with kappa_nu(r0 / l) = rho."""
    if nu == 1.5:
        # (1 + u) e^{-u} = rho  =>  u = -1 - W_{-1}(-rho / e)
        u = float(np.real(-1.0 - lambertw(-rho / np.e, k=-1)))
        return np.sqrt(3.0) * r0 / u
    if nu == 2.5:
        return bisect(lambda ell: matern_correlation(r0 / ell, nu) - rho,
                      1e-3 * r0, 1e3 * r0, xtol=1e-10 * r0)
    raise ValueError("only nu = 1.5 and nu = 2.5 are supported")


def robust_hyperparameters(X_std, y, nu: float = 1.5, round_index: int = 0,
                           cached: Hyperparameters | None = None) -> Hyperparameters:
    """Difference-based plug-in hyperparameters for the linear + Matern GP.

    Recomputed when ``round_index % 3 == 0`` (or nothing is cached);
    otherwise ``cached`` is returned unchanged.
    """
    if cached is not None and round_index % 3 != 0:
        return cached
    X = _as_inputs(X_std)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 3:
        raise InsufficientDataError("need at least 3 labelled points")
    c = float(np.median(y))
    j, dist = _nearest_neighbours(X)
    sigma_n = MAD_SCALE / np.sqrt(2.0) * float(np.median(np.abs(y - y[j])))
    sigma_n = max(sigma_n, 1e-6 * (1.0 + abs(c)))
    noise = sigma_n**2

    target = y - c
    ridge = 1e-6 * n
    beta = np.linalg.solve(X.T @ X + ridge * np.eye(X.shape[1]), X.T @ target)
    fitted = X @ beta
    resid = target - fitted
    lin_var = max(float(np.var(fitted)), 1e-12)
    f_var = max((MAD_SCALE * float(np.median(np.abs(resid)))) ** 2 - noise, 1e-12)

    r0 = float(np.median(dist))
    if not r0 > 0:
        positive = dist[dist > 0]
        r0 = float(np.median(positive)) if positive.size else 1.0
    return Hyperparameters(c, noise, lin_var, f_var, matern_lengthscale(r0, nu), nu)
