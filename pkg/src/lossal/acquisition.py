"""Acquisition scores for pool-based active learning.

EVR and weighted EVR score a GP candidate x+ by the expected drop in
(weighted) predictive variance at context inputs; weighted EPIG scores an
ensemble candidate by a weighted mutual information between the label at
x+ and the labels at the contexts. Higher is better; ties go to the lowest
candidate index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .beliefs import GaussianBelief, make_rng, weighted_gaussian_summary, weighted_gaussian_summary_quadrature
from .gp import GpPosterior, _as_inputs
from .losses import WeightFunction

METHODS = ("Random", "EVR", "EVRw", "EPIG", "EPIGw", "Linex")


class EstimatorError(FloatingPointError):
    pass


@dataclass(frozen=True)
class AcquisitionConfig:
    method: str = "EVR"
    weight: WeightFunction = field(default_factory=WeightFunction.constant)
    n_contexts: int | None = None  # None: every provided context
    n_y_draws: int = 64
    n_z_draws: int = 256
    linex_alpha: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown acquisition method {self.method!r}")
        if self.n_y_draws < 1 or self.n_z_draws < 1 or (self.n_contexts is not None and self.n_contexts < 1):
            raise ValueError("sample counts must be >= 1")


@dataclass
class ScoreReport:
    scores: np.ndarray
    contributions: np.ndarray | None = None  # (n_contexts, n_candidates)

    @property
    def argmax(self) -> int:
        return select_next(self)


def select_next(report: ScoreReport) -> int:
    scores = np.asarray(report.scores)
    if scores.size == 0:
        raise ValueError("empty candidate pool")
    return int(np.argmax(scores))  # first maximum wins


def random_select(pool, seed) -> int:
    n = pool if isinstance(pool, (int, np.integer)) else len(pool)
    if n < 1:
        raise ValueError("empty candidate pool")
    return int(make_rng(seed).integers(n))


# --------------------------------------------------------------------------
# regression


def _gp_terms(post: GpPosterior, candidates, contexts):
    C = _as_inputs(contexts)
    if C.shape[0] == 0:
        raise ValueError("no contexts")
    X = _as_inputs(candidates)
    s = post.cov(C, X)                       # (M, N)
    _, v_x = post.predict(X)
    tau_sq = v_x + post.noise                # (N,)
    m_c, v_c = post.predict(C)
    return C, s, tau_sq, m_c, v_c


def evr_scores(post: GpPosterior, candidates, contexts) -> ScoreReport:
    """EVR(x+) = mean_j s_n(c_j, x+)^2 / (v_n(x+) + noise)."""
    _, s, tau_sq, _, _ = _gp_terms(post, candidates, contexts)
    contrib = s * s / tau_sq
    return ScoreReport(contrib.mean(0), contrib)


def linex_scores(post: GpPosterior, candidates, contexts, alpha: float = 1.0) -> ScoreReport:
    """Expected reduction of the Gaussian Linex entropy alpha^2 v / 2."""
    _, s, tau_sq, _, _ = _gp_terms(post, candidates, contexts)
    contrib = 0.5 * alpha * alpha * (s * s / tau_sq)
    return ScoreReport(contrib.mean(0), contrib)


def _pre_uncertainty(m_c, v_c, weight: WeightFunction) -> np.ndarray:
    out = np.empty_like(m_c)
    for k, (m, v) in enumerate(zip(m_c, v_c)):
        belief = GaussianBelief(float(m), float(max(v, 1e-300)))
        if weight.exponent is not None or weight.kind == "constant":
            out[k] = weighted_gaussian_summary(belief, weight).U_w
        else:
            out[k] = weighted_gaussian_summary_quadrature(belief, weight).U_w
    return out


def _next_variance(v_c, s, tau_sq):
    v_next = v_c[:, None] - s * s / tau_sq
    if np.any(v_next < -1e-10):
        raise EstimatorError(f"one-step variance {v_next.min():.3e} is negative")
    return np.maximum(v_next, 0.0)


def _post_uncertainty_exp(a, m, b, sd, eta, eps):
    """Mean over y-draws of the self-normalised weighted variance, w = exp(a z).

    z_ij = m + b eta_j + sd eps_i factorises, so the sums over i reduce to
    three moments of exp(a sd eps).
    """
    S = eps.shape[-1]
    le = a * sd[..., None] * eps
    shift = le.max(-1, keepdims=True)
    e = np.exp(le - shift)
    E0 = e.sum(-1)
    E1 = (e * eps).sum(-1)
    E2 = (e * eps * eps).sum(-1)
    spread = sd * sd * np.maximum(E2 - E1 * E1 / E0, 0.0) / S
    ly = a * b[..., None] * eta
    ly_max = ly.max(-1)
    mean_y = np.exp(ly - ly_max[..., None]).mean(-1)
    return np.exp(a * m + shift[..., 0] + ly_max) * mean_y * spread


def _post_uncertainty_generic(weight: WeightFunction, m, b, sd, eta, eps):
    # z: (..., J, S)
    z = m[..., None, None] + b[..., None, None] * eta[..., :, None] + sd[..., None, None] * eps[..., None, :]
    lw = weight.log(z)
    shift = lw.max(-1, keepdims=True)
    if not np.all(np.isfinite(shift)):
        raise EstimatorError("all Monte Carlo weights vanished")
    w = np.exp(lw - shift)
    mu = (w * z).sum(-1, keepdims=True) / w.sum(-1, keepdims=True)
    U = np.exp(shift[..., 0]) * (w * (z - mu) ** 2).mean(-1)
    return U.mean(-1)


def evr_weighted_scores(post: GpPosterior, candidates, contexts, weight: WeightFunction,
                        n_y_draws: int = 64, n_z_draws: int = 256, seed=0,
                        common_random_numbers: bool = True) -> ScoreReport:
    """Weighted EVR with common random numbers.

    Per context c the pre-update term U_w^{(n)}(c) is exact (exponential or
    constant weights) or from quadrature; the post-update term averages, over
    y-draws eta_j, the self-normalised weighted variance of

        z_ij = m_n(c) + beta(c) sqrt(tau2) eta_j + sqrt(v_{n+1}(c)) eps_i.

    The same (eta, eps) are used for every candidate and context unless
    ``common_random_numbers`` is False.
    """
    C, s, tau_sq, m_c, v_c = _gp_terms(post, candidates, contexts)
    M, N = s.shape
    J, S = n_y_draws, n_z_draws
    if weight.kind == "constant":
        # posterior variance is deterministic, so the estimator is exact
        contrib = weight.value * (v_c[:, None] - _next_variance(v_c, s, tau_sq))
        return ScoreReport(contrib.mean(0), contrib)

    pre = _pre_uncertainty(m_c, v_c, weight)
    v_next = _next_variance(v_c, s, tau_sq)
    b = s / np.sqrt(tau_sq)                  # beta * sqrt(tau2)
    sd = np.sqrt(v_next)
    mm = np.broadcast_to(m_c[:, None], (M, N))

    rng = make_rng(seed)
    if common_random_numbers:
        eta = rng.standard_normal(J)
        eps = rng.standard_normal(S)
        eta_b, eps_b = eta[None, None, :], eps[None, None, :]
    else:
        eta_b = rng.standard_normal((N, J))[None, :, :]
        eps_b = rng.standard_normal((N, S))[None, :, :]

    a = weight.exponent
    post_u = np.empty((M, N))
    chunk = max(1, 2_000_000 // (M * J * S)) if a is None else N
    for lo in range(0, N, chunk):
        sl = slice(lo, lo + chunk)
        e_eta = np.broadcast_to(eta_b, (1, N, J))[:, sl]
        e_eps = np.broadcast_to(eps_b, (1, N, S))[:, sl]
        if a is not None:
            post_u[:, sl] = _post_uncertainty_exp(a, mm[:, sl], b[:, sl], sd[:, sl], e_eta, e_eps)
        else:
            post_u[:, sl] = _post_uncertainty_generic(weight, mm[:, sl], b[:, sl], sd[:, sl],
                                                      np.broadcast_to(e_eta, (M,) + e_eta.shape[1:]),
                                                      np.broadcast_to(e_eps, (M,) + e_eps.shape[1:]))
    contrib = pre[:, None] - post_u
    return ScoreReport(contrib.mean(0), contrib)


# --------------------------------------------------------------------------
# classification


def epig_weighted_from_probs(ctx_probs, cand_probs, class_weights=None, chunk: int = 128) -> ScoreReport:
    """Weighted EPIG from member probabilities.

    ``ctx_probs`` has shape (n_members, M, K) and ``cand_probs`` (n_members, N, K).
    With p(z, y) the member-averaged joint at (c, x) and p_w(z | c) the reweighted
    context marginal, each context contributes

        sum_{z,y} w(z) p(z,y) log[ w(z) p(z,y) / (p_w(z|c) sum_z' w(z') p(z',y)) ].
    """
    Pc = np.asarray(ctx_probs, dtype=float)
    Px = np.asarray(cand_probs, dtype=float)
    T, M, K = Pc.shape
    N = Px.shape[1]
    if M == 0:
        raise ValueError("no contexts")
    w = np.ones(K) if class_weights is None else np.asarray(class_weights, dtype=float)
    pz = Pc.mean(0)                                   # (M, K)
    pw = w * pz
    pw /= pw.sum(-1, keepdims=True)
    contrib = np.empty((M, N))
    for lo in range(0, N, chunk):
        px = Px[:, lo:lo + chunk]
        joint = np.einsum("tmz,tny->mnzy", Pc, px) / T
        wj = w[None, None, :, None] * joint
        marg_y = wj.sum(2, keepdims=True)
        denom = pw[:, None, :, None] * marg_y
        if np.any(wj <= 0) or np.any(denom <= 0):
            raise EstimatorError("non-positive probability inside the EPIG logarithm")
        contrib[:, lo:lo + chunk] = (wj * np.log(wj / denom)).sum((2, 3))
    return ScoreReport(contrib.mean(0), contrib)


def epig_weighted_scores(ens, candidates, contexts, class_weights=None) -> ScoreReport:
    return epig_weighted_from_probs(ens.member_probs(contexts), ens.member_probs(candidates), class_weights)


def epig_scores(ens, candidates, contexts) -> ScoreReport:
    """Plain EPIG: the weighted estimator with unit weights."""
    return epig_weighted_scores(ens, candidates, contexts, None)
