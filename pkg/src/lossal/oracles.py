"""Slow reference computations used to check the fast paths.

Nothing here is used for acquisition itself. Every routine takes a
different computational route from the code it checks: grid search instead
of closed-form minimisers, dense refits instead of rank-one updates, nested
Monte Carlo with fresh draws instead of common random numbers, and explicit
loops instead of vectorised sums.
"""

from __future__ import annotations

import itertools

import numpy as np

from .beliefs import GaussianBelief, make_rng, weighted_gaussian_summary_quadrature
from .gp import _as_inputs
from .losses import DiscreteBelief, WeightedBregmanLoss, bregman_divergence


def _zoom_1d(f, lo: float, hi: float, n: int = 401, rounds: int = 12):
    """Refine a 1-D grid around its best point; ``f`` maps a grid array to values."""
    best = None
    for _ in range(rounds):
        grid = np.linspace(lo, hi, n)
        vals = f(grid)
        k = int(np.argmin(vals))
        best = (grid[k], vals[k])
        step = (hi - lo) / (n - 1)
        lo, hi = max(lo, grid[k] - 2 * step), min(hi, grid[k] + 2 * step)
    return best


def _batched_expected_loss(loss: WeightedBregmanLoss, belief: DiscreteBelief):
    """E_q[w(z) D(T(z), a)] for a stack of actions A of shape (G, K), by direct summation."""
    mask = belief.probs > 0
    support = belief.support[mask]
    t = loss.transform(support)
    coef = belief.probs[mask] * loss.weight(support)
    n, K = t.shape

    def f(A):
        A = np.asarray(A, dtype=float).reshape(-1, K)
        G = len(A)
        d = bregman_divergence(loss.potential, np.tile(t, (G, 1)), np.repeat(A, n, axis=0))
        return np.asarray(d).reshape(G, n) @ coef

    return f


def grid_min_expected_loss(loss: WeightedBregmanLoss, belief: DiscreteBelief, return_grid: bool = False):
    """Minimise E_q[l(z, a)] over actions by successively refined grids.

    Scalar actions (quadratic / neg_log potentials) use a 1-D grid spanning
    the transformed support; simplex actions with K = 2 or 3 use a grid over
    the simplex. Returns (min value, argmin) and optionally every grid
    action visited on the first (coarse) pass.
    """
    f = _batched_expected_loss(loss, belief)
    t = loss.transform(belief.support[belief.probs > 0])
    kind = loss.potential.kind
    if kind in ("quadratic", "neg_log"):
        lo, hi = float(t.min()), float(t.max())
        pad = 0.1 * (hi - lo) + 1e-3
        lo = lo - pad if kind == "quadratic" else max(lo - pad, 0.5 * lo)
        hi = hi + pad
        coarse = np.linspace(lo, hi, 401)
        a, v = _zoom_1d(f, lo, hi)
        out = (v, np.array([a]))
        return out + ((coarse[:, None]),) if return_grid else out

    K = t.shape[1]
    eps = 1e-9
    if K == 2:
        g = lambda p: f(np.stack([p, 1.0 - p], axis=-1))
        p, v = _zoom_1d(g, eps, 1 - eps)
        coarse = np.linspace(eps, 1 - eps, 401)
        out = (v, np.array([p, 1 - p]))
        return out + (np.stack([coarse, 1 - coarse], 1),) if return_grid else out
    if K == 3:
        lo = np.array([eps, eps])
        hi = np.array([1 - eps, 1 - eps])
        best = None
        coarse_pts = None
        for r in range(14):
            g1 = np.linspace(lo[0], hi[0], 81)
            g2 = np.linspace(lo[1], hi[1], 81)
            pts = np.array([(a, b, 1 - a - b) for a in g1 for b in g2 if 1 - a - b > eps])
            if r == 0:
                coarse_pts = pts
            vals = f(pts)
            k = int(np.argmin(vals))
            best = (vals[k], pts[k])
            step = (hi - lo) / 80
            lo = np.maximum(pts[k][:2] - 2 * step, eps)
            hi = np.minimum(pts[k][:2] + 2 * step, 1 - eps)
        return best + (coarse_pts,) if return_grid else best
    raise ValueError("grid oracle supports scalar actions or K <= 3 simplices")


def refit_posterior(kernel, mean_const, noise, X, y, Xq):
    """Posterior mean/variance at Xq from a dense inverse (no Cholesky)."""
    X = _as_inputs(X)
    Xq = _as_inputs(Xq)
    if X.shape[0] == 0:
        return np.full(len(Xq), float(mean_const)), np.diag(kernel(Xq, Xq)).copy()
    Ainv = np.linalg.inv(kernel(X, X) + noise * np.eye(len(X)))
    Kq = kernel(Xq, X)
    mean = mean_const + Kq @ Ainv @ (np.asarray(y, float) - mean_const)
    var = np.diag(kernel(Xq, Xq)) - np.einsum("ij,jk,ik->i", Kq, Ainv, Kq)
    return mean, var


def refit_variance_reduction(post, x_plus, contexts) -> np.ndarray:
    """v_n(c) - v_{n+1}(c) with both posteriors computed by dense refits."""
    x_plus = _as_inputs(x_plus)[:1]
    X_new = np.vstack([post.X, x_plus]) if post.n else x_plus
    y_new = np.append(post.y, 0.0)
    _, v0 = refit_posterior(post.kernel, post.mean_const, post.noise, post.X, post.y, contexts)
    _, v1 = refit_posterior(post.kernel, post.mean_const, post.noise, X_new, y_new, contexts)
    return v0 - v1


def nested_mc_evr_weighted(post, x_plus, contexts, weight, n_outer: int, n_inner: int, seed):
    """Nested Monte Carlo EVR_w for one candidate with fresh draws.

    Outer: y+ ~ p(y+ | x+). Inner: z ~ p(z | c, x+, y+) from a dense refit.
    Returns (estimate, standard error).
    """
    rng = make_rng(seed)
    C = _as_inputs(contexts)
    x_plus = _as_inputs(x_plus)[:1]
    m_x, v_x = refit_posterior(post.kernel, post.mean_const, post.noise, post.X, post.y, x_plus)
    m_c, v_c = refit_posterior(post.kernel, post.mean_const, post.noise, post.X, post.y, C)
    X_new = np.vstack([post.X, x_plus]) if post.n else x_plus
    per_ctx = []
    per_ctx_var = []
    for k in range(len(C)):
        pre = weighted_gaussian_summary_quadrature(GaussianBelief(m_c[k], v_c[k]), weight).U_w
        ys = m_x[0] + np.sqrt(v_x[0] + post.noise) * rng.standard_normal(n_outer)
        vals = np.empty(n_outer)
        # posterior at c is affine in y+: evaluate the refit at y+ = 0 and y+ = 1
        m0, v1 = refit_posterior(post.kernel, post.mean_const, post.noise, X_new, np.append(post.y, 0.0), C[k:k + 1])
        m1, _ = refit_posterior(post.kernel, post.mean_const, post.noise, X_new, np.append(post.y, 1.0), C[k:k + 1])
        for j, yp in enumerate(ys):
            mean = m0[0] + (m1[0] - m0[0]) * yp
            z = mean + np.sqrt(max(v1[0], 0.0)) * rng.standard_normal(n_inner)
            w = weight(z)
            mu = w @ z / w.sum()
            vals[j] = np.mean(w * (z - mu) ** 2)
        per_ctx.append(pre - vals.mean())
        per_ctx_var.append(vals.var(ddof=1) / n_outer)
    est = float(np.mean(per_ctx))
    se = float(np.sqrt(np.sum(per_ctx_var)) / len(C))
    return est, se


def epig_weighted_bruteforce(ctx_probs, cand_probs, class_weights) -> np.ndarray:
    """Loop-by-loop weighted EPIG via  E[w(z) log p(y|x,z,c) / q(y|x,c)].

    p(y|x,z,c) = p(z,y|c,x) / p(z|c) and q(y|x,c) = sum_z p_w(z|c) p(y|x,z,c).
    """
    Pc = np.asarray(ctx_probs, float)
    Px = np.asarray(cand_probs, float)
    T, M, K = Pc.shape
    N = Px.shape[1]
    w = [float(v) for v in class_weights]
    scores = []
    for n in range(N):
        total = 0.0
        for m in range(M):
            joint = [[sum(Pc[t, m, z] * Px[t, n, y] for t in range(T)) / T for y in range(K)] for z in range(K)]
            pz = [sum(Pc[t, m, z] for t in range(T)) / T for z in range(K)]
            wbar = sum(w[z] * pz[z] for z in range(K))
            pwz = [w[z] * pz[z] / wbar for z in range(K)]
            cond = [[joint[z][y] / pz[z] for y in range(K)] for z in range(K)]
            q = [sum(pwz[z] * cond[z][y] for z in range(K)) for y in range(K)]
            for z, y in itertools.product(range(K), range(K)):
                total += w[z] * joint[z][y] * np.log(cond[z][y] / q[y])
        scores.append(total / M)
    return np.array(scores)
