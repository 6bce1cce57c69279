"""Pool-based active-learning driver and evaluation metrics."""

from __future__ import annotations

import logging
import time
import zlib
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import acquisition as acq
from .acquisition import AcquisitionConfig
from .beliefs import GaussianBelief, weighted_gaussian_summary_quadrature
from .datasets import ClassificationTask, RegressionTask
from .ensemble import train_ensemble
from .gp import RBF, Hyperparameters, fit, robust_hyperparameters
from .losses import WeightFunction

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
NUMERICAL_ERRORS = (FloatingPointError, np.linalg.LinAlgError)


class RoundError(RuntimeError):
    """A numerical failure inside one round, tagged with where it happened."""

    def __init__(self, seed, method: str, round_index: int, cause: Exception):
        super().__init__(f"seed={seed} method={method} round={round_index}: {type(cause).__name__}: {cause}")
        self.seed, self.method, self.round, self.cause = seed, method, round_index, cause


def _check_finite(metrics: dict):
    bad = [k for k, v in metrics.items() if not np.isfinite(v)]
    if bad:
        raise FloatingPointError(f"non-finite metrics {bad}")


@dataclass
class RoundRecord:
    round: int
    method: str
    chosen: int | None                 # pool index acquired this round
    metrics: dict
    class_counts: list | None = None   # cumulative labelled counts per class
    wall_time: float = 0.0
    warning: str | None = None


@dataclass(frozen=True)
class GpModelConfig:
    """``kernel="rbf"`` uses fixed hyperparameters; ``"linear_matern"`` the robust plug-in rules."""

    kernel: str = "rbf"
    lengthscale: float = 1.0
    variance: float = 1.0
    noise: float = 0.04
    mean_const: float = 0.0
    nu: float = 1.5

    def __post_init__(self):
        if self.kernel not in ("rbf", "linear_matern"):
            raise ValueError(f"unknown kernel {self.kernel!r}")


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100


def derive_seed(*parts) -> np.random.SeedSequence:
    """SeedSequence keyed on integers and strings (strings hashed with CRC32)."""
    key = [p if isinstance(p, (int, np.integer)) else zlib.crc32(str(p).encode()) for p in parts]
    return np.random.SeedSequence([int(k) for k in key])


# --------------------------------------------------------------------------
# metrics


def _normalised_weights(weight: WeightFunction, y) -> np.ndarray:
    lw = weight.log(y)
    return np.exp(lw - logsumexp(lw))


def _weighted_average(weight: WeightFunction, y, values) -> float:
    # constant weights cancel; the plain mean keeps weighted == unweighted bit-for-bit
    if weight.is_constant:
        return float(np.mean(values))
    return float(_normalised_weights(weight, y) @ values)


def weighted_mean_prediction(mean, var, weight: WeightFunction) -> np.ndarray:
    """Bayes act mu_w of the weighted squared error under N(mean, var)."""
    a = weight.exponent
    if weight.kind == "constant" or (a is not None and a == 0.0):
        return np.asarray(mean, dtype=float)
    if a is not None:
        return mean + a * var
    return np.array([weighted_gaussian_summary_quadrature(GaussianBelief(m, v), weight).mu_w
                     for m, v in zip(mean, var)])


def regression_metrics(mean, var, y, weight: WeightFunction, linex_alpha: float = 1.0) -> dict:
    """SEL, SEL_w, NLL, NLL_w and Linex for Gaussian predictives N(mean, var) of y.

    SEL scores the predictive mean and SEL_w the weighted mean mu_w (each the
    Bayes act of its loss); SEL_w_mean scores the plain mean under the
    weighted average. Linex uses the act b* = mean - alpha var / 2.
    """
    mean, var, y = (np.asarray(a, dtype=float) for a in (mean, var, y))
    nll = 0.5 * np.log(2 * np.pi * var) + 0.5 * (y - mean) ** 2 / var
    mu_w = mean if weight.is_constant else weighted_mean_prediction(mean, var, weight)
    d = linex_alpha * ((mean - 0.5 * linex_alpha * var) - y)
    return {
        "SEL": float(np.mean((y - mean) ** 2)),
        "SEL_w": _weighted_average(weight, y, (y - mu_w) ** 2),
        "SEL_w_mean": _weighted_average(weight, y, (y - mean) ** 2),
        "NLL": float(np.mean(nll)),
        "NLL_w": _weighted_average(weight, y, nll),
        "Linex": float(np.mean(np.expm1(d) - d)),
    }


def weighted_squared_error(y, pred, weight: WeightFunction) -> float:
    y = np.asarray(y, dtype=float)
    return _weighted_average(weight, y, (y - np.asarray(pred, dtype=float)) ** 2)


def classification_metrics(probs, y, class_weights=None) -> tuple[dict, int]:
    """NLL and class-weighted NLL; returns (metrics, number of clamped probabilities)."""
    probs = np.asarray(probs, dtype=float)
    y = np.asarray(y, dtype=int)
    q = probs[np.arange(len(y)), y]
    clamped = int(np.sum(q < PROB_FLOOR))
    nll = -np.log(np.maximum(q, PROB_FLOOR))
    nll_mean = float(nll.mean())
    if class_weights is None or len(set(class_weights)) <= 1:
        return {"NLL": nll_mean, "NLL_w": nll_mean}, clamped
    wy = np.asarray(class_weights, dtype=float)[y]
    return {"NLL": nll_mean, "NLL_w": float(wy @ nll / wy.sum())}, clamped


# --------------------------------------------------------------------------
# regression


def _fit_gp(model: GpModelConfig, X, y, round_index: int, cache: dict):
    if model.kernel == "rbf":
        return fit(RBF(model.lengthscale, model.variance), model.mean_const, model.noise, X, y)
    hp: Hyperparameters = robust_hyperparameters(X, y, model.nu, round_index, cache.get("hp"))
    cache["hp"] = hp
    return fit(hp.kernel(), hp.mean_const, hp.noise, X, y)


def _score_regression(post, candidates, task: RegressionTask, cfg: AcquisitionConfig, seed):
    contexts = task.context_X if cfg.n_contexts is None else task.context_X[:cfg.n_contexts]
    if cfg.method == "EVR":
        return acq.evr_scores(post, candidates, contexts)
    if cfg.method == "EVRw":
        return acq.evr_weighted_scores(post, candidates, contexts, cfg.weight, cfg.n_y_draws, cfg.n_z_draws, seed)
    if cfg.method == "Linex":
        return acq.linex_scores(post, candidates, contexts, cfg.linex_alpha)
    raise ValueError(f"method {cfg.method!r} does not apply to regression")


def _acquire(rec: RoundRecord, available: np.ndarray, labelled: list, pick) -> int | None:
    """Move one pool index to the labelled set; None (and a warning) if the pool is empty."""
    pool_idx = np.nonzero(available)[0]
    if len(pool_idx) == 0:
        rec.warning = f"pool exhausted after {rec.round} acquisitions"
        log.warning(rec.warning)
        return None
    chosen = int(pool_idx[pick(pool_idx)])
    labelled.append(chosen)
    available[chosen] = False
    return chosen


def run_regression(task: RegressionTask, model: GpModelConfig, cfg: AcquisitionConfig, n_rounds: int,
                   eval_weight: WeightFunction | None = None, linex_alpha: float = 1.0) -> list[RoundRecord]:
    """Acquire ``n_rounds`` labels one at a time; record metrics after every round (round 0 = initial).

    Numerical failures are re-raised as :class:`RoundError`.
    """
    eval_weight = eval_weight or cfg.weight
    labelled = [int(i) for i in task.initial]
    available = np.ones(len(task.pool_y), dtype=bool)
    available[labelled] = False
    cache: dict = {}
    records = []
    chosen = None
    for r in range(n_rounds + 1):
        t0 = time.perf_counter()
        try:
            post = _fit_gp(model, task.pool_X[labelled], task.pool_y[labelled], r, cache)
            mean, var = post.predict(task.test_X)
            metrics = regression_metrics(mean, var + post.noise, task.test_y, eval_weight, linex_alpha)
            _check_finite(metrics)
            rec = RoundRecord(r, cfg.method, chosen, metrics)
            records.append(rec)
            if r < n_rounds:
                seed = derive_seed(task.seed, r, cfg.method)
                if cfg.method == "Random":
                    pick = lambda idx: acq.random_select(len(idx), seed)
                else:
                    pick = lambda idx: acq.select_next(_score_regression(post, task.pool_X[idx], task, cfg, seed))
                chosen = _acquire(rec, available, labelled, pick)
        except NUMERICAL_ERRORS as err:
            raise RoundError(task.seed, cfg.method, r, err) from err
        rec.wall_time = time.perf_counter() - t0
        if r < n_rounds and chosen is None:
            break
    return records


# --------------------------------------------------------------------------
# classification


def run_classification(task: ClassificationTask, forest: ForestConfig, cfg: AcquisitionConfig,
                       n_rounds: int, eval_weights=None) -> list[RoundRecord]:
    """Classification analogue of :func:`run_regression` with a retrained forest each round."""
    if cfg.method not in ("Random", "EPIG", "EPIGw"):
        raise ValueError(f"method {cfg.method!r} does not apply to classification")
    if eval_weights is None:
        eval_weights = task.class_weights or None
    acq_weights = None
    if cfg.method == "EPIGw":
        acq_weights = cfg.weight.values if cfg.weight.kind == "class_weights" else task.class_weights
        if not acq_weights:
            raise ValueError("EPIGw needs class weights")
    labelled = [int(i) for i in task.initial]
    available = np.ones(len(task.pool_y), dtype=bool)
    available[labelled] = False
    records = []
    chosen = None
    for r in range(n_rounds + 1):
        t0 = time.perf_counter()
        try:
            # forest seed depends on (seed, round) only, so methods share it
            ens = train_ensemble(task.pool_X[labelled], task.pool_y[labelled], forest.n_trees,
                                 derive_seed(task.seed, r, "forest").generate_state(1)[0], task.n_classes)
            metrics, clamped = classification_metrics(ens.posterior_predictive(task.test_X), task.test_y,
                                                      eval_weights)
            _check_finite(metrics)
            counts = np.bincount(task.pool_y[labelled], minlength=task.n_classes).tolist()
            rec = RoundRecord(r, cfg.method, chosen, metrics, counts)
            if clamped:
                rec.warning = f"{clamped} test probabilities clamped at {PROB_FLOOR:g}"
            records.append(rec)
            if r < n_rounds:
                if cfg.method == "Random":
                    seed = derive_seed(task.seed, r, cfg.method)
                    pick = lambda idx: acq.random_select(len(idx), seed)
                else:
                    pick = lambda idx: acq.select_next(
                        acq.epig_weighted_scores(ens, task.pool_X[idx], task.context_X, acq_weights))
                chosen = _acquire(rec, available, labelled, pick)
        except NUMERICAL_ERRORS as err:
            raise RoundError(task.seed, cfg.method, r, err) from err
        rec.wall_time = time.perf_counter() - t0
        if r < n_rounds and chosen is None:
            break
    return records


def acquired_share(records: list[RoundRecord], classes) -> float:
    """Fraction of acquired (non-initial) labels falling in ``classes``."""
    first = np.asarray(records[0].class_counts)
    last = np.asarray(records[-1].class_counts)
    gained = last - first
    total = gained.sum()
    return float(gained[list(classes)].sum() / total) if total else 0.0
