"""Quick oracle and invariant checks run by ``lossal selftest``.

Each check compares a fast path against an independent slow route on a
handful of random cases and raises AssertionError on mismatch. The full
versions live in the test suite.
"""

from __future__ import annotations

import time

import numpy as np

from . import oracles
from .acquisition import epig_weighted_from_probs, evr_scores, evr_weighted_scores
from .beliefs import GaussianBelief, weighted_gaussian_summary_analytic, weighted_gaussian_summary_mc
from .gp import RBF, fit
from .losses import (DiscreteBelief, Potential, Transform, WeightedBregmanLoss, WeightFunction, bayes_act,
                     eval_discrepancy_decomposition, expected_loss, generalised_entropy)


def _close(a, b, tol, what):
    if not np.allclose(a, b, rtol=0, atol=tol):
        raise AssertionError(f"{what}: {a} vs {b} (tol {tol})")


def check_entropy_vs_grid(rng):
    for _ in range(3):
        n = int(rng.integers(2, 6))
        belief = DiscreteBelief(rng.normal(size=n), rng.dirichlet(np.ones(n)))
        for w in (WeightFunction.constant(), WeightFunction.exp_pos(0.7)):
            loss = WeightedBregmanLoss.squared_error(w)
            best, _ = oracles.grid_min_expected_loss(loss, belief)
            h = generalised_entropy(loss, belief)
            _close(h, best, 1e-5, "entropy vs grid")
            assert expected_loss(loss, belief, bayes_act(loss, belief)) <= best + 1e-9


def check_one_step_update(rng):
    X = rng.uniform(-3, 3, (6, 1))
    y = rng.normal(size=6)
    kern = RBF(0.8, 1.3)
    post = fit(kern, 0.2, 0.05, X, y)
    C = rng.uniform(-3, 3, (5, 1))
    xp = rng.uniform(-3, 3, (1, 1))
    upd = post.one_step_update(xp, C)
    _, v_ref = oracles.refit_posterior(kern, 0.2, 0.05, np.vstack([X, xp]), np.append(y, 0.0), C)
    _close(upd.v_next, v_ref, 1e-8, "one-step variance")
    m_ref, _ = oracles.refit_posterior(kern, 0.2, 0.05, np.vstack([X, xp]), np.append(y, 0.4), C)
    _close(post.updated_mean(xp, 0.4, C), m_ref, 1e-8, "one-step mean")
    _close(evr_scores(post, xp, C).scores[0], oracles.refit_variance_reduction(post, xp, C).mean(), 1e-8,
           "closed-form EVR")


def check_exp_weight_summary(rng):
    m, v, a = rng.normal(), rng.uniform(0.1, 1.0), rng.uniform(-1, 1)
    exact = weighted_gaussian_summary_analytic(GaussianBelief(m, v), a)
    mc = weighted_gaussian_summary_mc(GaussianBelief(m, v), WeightFunction.exp_pos(a), 200_000, 1)
    for e, s, se in zip((exact.w_bar, exact.mu_w, exact.U_w), (mc.w_bar, mc.mu_w, mc.U_w), mc.stderr):
        assert abs(e - s) < 5 * se + 1e-12, "analytic vs MC weighted summary"


def check_reweighting_identity(rng):
    belief = DiscreteBelief(rng.normal(size=5), rng.dirichlet(np.ones(5)))
    w = WeightFunction.exp_pos(0.9)
    lw = np.log(w(belief.support)) + np.log(belief.probs)
    w_bar = np.exp(lw).sum()
    reweighted = DiscreteBelief(belief.support, np.exp(lw) / w_bar)
    _close(generalised_entropy(WeightedBregmanLoss.squared_error(w), belief),
           w_bar * generalised_entropy(WeightedBregmanLoss.squared_error(), reweighted), 1e-10,
           "weighted entropy = w_bar x entropy under reweighted belief")


def check_decomposition(rng):
    for pot, support in ((Potential.quadratic(), rng.normal(size=(4, 2))),
                         (Potential.neg_entropy(), rng.dirichlet(np.ones(3), size=4))):
        p = DiscreteBelief(support, rng.dirichlet(np.ones(4)))
        q = DiscreteBelief(support, rng.dirichlet(np.ones(4)))
        total, est, irr = eval_discrepancy_decomposition(pot, p, q)
        _close(total, est + irr, 1e-10, "evaluation discrepancy decomposition")


def check_epig(rng):
    Pc = rng.dirichlet(np.ones(3), size=(2, 3))
    Px = rng.dirichlet(np.ones(3), size=(2, 4))
    w = rng.uniform(0.5, 5, 3)
    _close(epig_weighted_from_probs(Pc, Px, w).scores, oracles.epig_weighted_bruteforce(Pc, Px, w), 1e-12,
           "weighted EPIG vs brute force")
    assert np.array_equal(epig_weighted_from_probs(Pc, Px, np.ones(3)).scores,
                          epig_weighted_from_probs(Pc, Px, None).scores), "EPIG_w with w=1 differs from EPIG"


def check_evr_weighted_paths(rng):
    X = rng.uniform(-3, 3, (5, 1))
    post = fit(RBF(1.0, 1.0), 0.0, 0.04, X, rng.normal(size=5))
    cand, ctx = rng.uniform(-3, 3, (6, 1)), rng.uniform(-3, 3, (4, 1))
    const = evr_weighted_scores(post, cand, ctx, WeightFunction.constant())
    _close(const.scores, evr_scores(post, cand, ctx).scores, 1e-12, "EVR_w with w=1 vs EVR")
    a = 0.8
    fast = evr_weighted_scores(post, cand, ctx, WeightFunction.exp_pos(a), 16, 32, seed=3)
    slow = evr_weighted_scores(post, cand, ctx, WeightFunction.custom(lambda z: np.exp(a * z)), 16, 32, seed=3)
    _close(fast.scores, slow.scores, 1e-9, "factorised vs generic EVR_w")


CHECKS = {
    "generalised entropy vs grid minimisation": check_entropy_vs_grid,
    "GP one-step update and closed-form EVR": check_one_step_update,
    "exponential-weight analytic summary": check_exp_weight_summary,
    "reweighting identity": check_reweighting_identity,
    "evaluation-discrepancy decomposition": check_decomposition,
    "weighted EPIG oracle and reduction": check_epig,
    "weighted EVR estimator paths": check_evr_weighted_paths,
}


def run_all(verbose: bool = False, seed: int = 20240607) -> bool:
    ok = True
    for name, check in CHECKS.items():
        t0 = time.perf_counter()
        try:
            check(np.random.default_rng(seed))
            status = "PASS"
        except AssertionError as err:
            ok = False
            status = f"FAIL ({err})"
        if verbose:
            print(f"{status:4s}  {name}  [{time.perf_counter() - t0:.2f}s]")
    return ok
