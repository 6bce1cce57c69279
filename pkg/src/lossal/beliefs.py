"""Gaussian predictive beliefs and their weighted moments.

For a scalar belief z ~ N(m, v) and weight w, the quantities the weighted
squared-error geometry needs are

    w_bar = E[w(z)],  mu_w = E[w(z) z] / w_bar,  U_w = E[w(z) (z - mu_w)^2].

They are analytic for w(z) = exp(a z); otherwise a deterministic quadrature
or a seeded self-normalised Monte Carlo estimate is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .losses import DegenerateBeliefError, WeightFunction


class UnsupportedWeightError(ValueError):
    pass


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator; ``seed`` may be an int or a SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class GaussianBelief:
    mean: float
    var: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and self.var > 0 and np.isfinite(self.var)):
            raise ValueError("Gaussian belief needs a finite mean and variance > 0")


@dataclass(frozen=True)
class WeightedGaussianSummary:
    w_bar: float
    mu_w: float
    U_w: float
    # Monte Carlo standard errors of (w_bar, mu_w, U_w); None for exact paths
    stderr: tuple[float, float, float] | None = None


def weighted_gaussian_summary_analytic(belief: GaussianBelief, alpha: float) -> WeightedGaussianSummary:
    """Exact summary for w(z) = exp(alpha z).

    p_w = N(m + alpha v, v), w_bar = exp(alpha m + alpha^2 v / 2), U_w = w_bar v.
    """
    m, v = belief.mean, belief.var
    w_bar = float(np.exp(alpha * m + 0.5 * alpha * alpha * v))
    return WeightedGaussianSummary(w_bar, m + alpha * v, w_bar * v)


def weighted_gaussian_summary(belief: GaussianBelief, weight: WeightFunction) -> WeightedGaussianSummary:
    """Analytic path when the weight is exponential, otherwise raise."""
    a = weight.exponent
    if a is None:
        if weight.kind == "constant":
            s = weighted_gaussian_summary_analytic(belief, 0.0)
            return WeightedGaussianSummary(weight.value, s.mu_w, weight.value * s.U_w)
        raise UnsupportedWeightError(f"no analytic reweighting for {weight.kind!r} weights")
    return weighted_gaussian_summary_analytic(belief, a)


def weighted_gaussian_summary_mc(belief: GaussianBelief, weight: WeightFunction, n_samples: int,
                                 seed) -> WeightedGaussianSummary:
    """Self-normalised Monte Carlo summary from ``n_samples`` draws of N(m, v)."""
    if n_samples < 2:
        raise ValueError("need at least two samples")
    rng = make_rng(seed)
    z = belief.mean + np.sqrt(belief.var) * rng.standard_normal(n_samples)
    w = weight(z)
    total = w.sum()
    if not total > 0 or not np.isfinite(total):
        raise DegenerateBeliefError("all Monte Carlo weights are zero")
    w_bar = total / n_samples
    mu = float(w @ z / total)
    dev = w * (z - mu) ** 2
    U = float(dev.mean())
    root_s = np.sqrt(n_samples)
    se = (
        float(w.std() / root_s),
        float(np.sqrt(np.mean((w * (z - mu)) ** 2)) / (w_bar * root_s)),
        float(dev.std() / root_s),
    )
    return WeightedGaussianSummary(float(w_bar), mu, U, se)


def weighted_gaussian_summary_quadrature(belief: GaussianBelief, weight: WeightFunction,
                                         n_atoms: int = 2001, width: float = 8.0) -> WeightedGaussianSummary:
    """Deterministic trapezoid discretisation of N(m, v) over m +- width*sd."""
    m, sd = belief.mean, np.sqrt(belief.var)
    z = np.linspace(m - width * sd, m + width * sd, n_atoms)
    logp = -0.5 * ((z - m) / sd) ** 2
    logp -= logsumexp(logp)
    with np.errstate(divide="ignore"):
        lw = weight.log(z) + logp
    log_wbar = logsumexp(lw)
    if not np.isfinite(log_wbar):
        raise DegenerateBeliefError("weight vanishes on the quadrature grid")
    qw = np.exp(lw - log_wbar)
    mu = float(qw @ z)
    w_bar = float(np.exp(log_wbar))
    return WeightedGaussianSummary(w_bar, mu, w_bar * float(qw @ (z - mu) ** 2))


def discretise(belief: GaussianBelief, n_atoms: int = 2001, width: float = 8.0):
    """Support and probabilities of the quadrature grid (for DiscreteBelief)."""
    m, sd = belief.mean, np.sqrt(belief.var)
    z = np.linspace(m - width * sd, m + width * sd, n_atoms)
    p = np.exp(-0.5 * ((z - m) / sd) ** 2)
    return z, p / p.sum()


def linex_entropy(belief: GaussianBelief, alpha: float) -> float:
    """Generalised entropy of the (unweighted) Linex loss under N(m, v).

    With T(z) = exp(-alpha z) and phi = -log this is
    E[alpha z] + log E[exp(-alpha z)] = alpha^2 v / 2.
    """
    return 0.5 * alpha * alpha * belief.var
