import numpy as np
import pytest

from lossal import loop
from lossal.acquisition import AcquisitionConfig
from lossal.datasets import RegressionTask, synth_1d, synth_classification
from lossal.losses import WeightFunction
from lossal.loop import (ForestConfig, GpModelConfig, RoundError, acquired_share, classification_metrics,
                         derive_seed, regression_metrics, run_classification, run_regression,
                         weighted_squared_error)


def test_zero_rounds_gives_initial_record_only():
    recs = run_regression(synth_1d(0), GpModelConfig(), AcquisitionConfig("EVR"), 0)
    assert len(recs) == 1 and recs[0].round == 0 and recs[0].chosen is None


def test_weighted_squared_error_hand_example():
    got = weighted_squared_error([0.0, 1.0], [1.0, -1.0], WeightFunction.exp_pos(1.0))
    e = np.e
    assert got == pytest.approx((1 + 4 * e) / (1 + e), rel=1e-14)


def test_perfect_predictions_score_zero():
    y = np.array([0.3, -1.2, 2.0])
    w = WeightFunction.exp_pos(1.0)
    assert weighted_squared_error(y, y, w) == 0.0
    probs = np.eye(3)[[0, 2, 1]]
    m, _ = classification_metrics(probs, [0, 2, 1], (5, 1, 1))
    assert m["NLL"] == 0.0 and m["NLL_w"] == 0.0


def test_unit_weights_reduce_to_unweighted_metrics():
    rng = np.random.default_rng(0)
    mean, var, y = rng.normal(size=20), rng.uniform(0.1, 1, 20), rng.normal(size=20)
    m = regression_metrics(mean, var, y, WeightFunction.constant())
    assert m["SEL_w"] == m["SEL"] and m["NLL_w"] == m["NLL"]
    probs = rng.dirichlet(np.ones(3), 20)
    labels = rng.integers(0, 3, 20)
    c, _ = classification_metrics(probs, labels, (1, 1, 1))
    assert c["NLL_w"] == c["NLL"]


def test_weighted_mean_shift_in_metrics():
    # under exp(a z) weights the scored act is mean + a var
    mean, var, y = np.array([0.0]), np.array([0.5]), np.array([1.0])
    m = regression_metrics(mean, var, y, WeightFunction.exp_pos(1.0))
    assert m["SEL_w"] == pytest.approx(0.25, rel=1e-14)
    assert m["SEL_w_mean"] == pytest.approx(1.0, rel=1e-14)


def test_linex_metric_matches_direct_formula():
    mean, var, y = np.array([0.2, -0.4]), np.array([0.3, 0.6]), np.array([0.0, 0.5])
    a = 1.0
    act = mean - a * var / 2
    d = a * (act - y)
    ref = np.mean(np.exp(d) - d - 1)
    assert regression_metrics(mean, var, y, WeightFunction.constant(), a)["Linex"] == pytest.approx(ref, rel=1e-14)


def test_regression_bookkeeping():
    task = synth_1d(1)
    recs = run_regression(task, GpModelConfig(), AcquisitionConfig("EVR"), 6)
    assert [r.round for r in recs] == list(range(7))
    chosen = [r.chosen for r in recs[1:]]
    assert len(set(chosen)) == 6
    assert not set(chosen) & set(task.initial.tolist())


def test_classification_counts_add_up():
    task = synth_classification(0, n_per_class=40, test_per_class=10)
    recs = run_classification(task, ForestConfig(5), AcquisitionConfig("EPIG"), 4)
    for r in recs:
        assert sum(r.class_counts) == len(task.initial) + r.round


def test_unit_class_weights_give_identical_epig_runs():
    task = synth_classification(2, n_per_class=40, test_per_class=10)
    a = run_classification(task, ForestConfig(5), AcquisitionConfig("EPIG"), 3)
    b = run_classification(task, ForestConfig(5), AcquisitionConfig("EPIGw", WeightFunction.class_weights((1, 1, 1, 1))), 3)
    assert [r.chosen for r in a] == [r.chosen for r in b]
    assert [r.metrics for r in a] == [r.metrics for r in b]


def test_heavy_class_weight_steers_acquisition():
    w = (50.0, 1.0, 1.0, 50.0)
    shares = {}
    for method in ("EPIG", "EPIGw"):
        cfg = AcquisitionConfig(method, WeightFunction.class_weights(w))
        shares[method] = np.mean([acquired_share(run_classification(
            synth_classification(s, n_per_class=50, test_per_class=10, class_weights=w), ForestConfig(10), cfg, 10),
            [0, 3]) for s in range(6)])
    assert shares["EPIGw"] > shares["EPIG"] + 0.05


def test_numerical_failure_is_tagged(monkeypatch):
    def boom(*args, **kwargs):
        raise np.linalg.LinAlgError("synthetic failure")

    monkeypatch.setattr(loop.acq, "evr_scores", boom)
    with pytest.raises(RoundError) as info:
        run_regression(synth_1d(4), GpModelConfig(), AcquisitionConfig("EVR"), 3)
    err = info.value
    assert (err.seed, err.method, err.round) == (4, "EVR", 0)
    assert "seed=4 method=EVR round=0" in str(err)


def test_pool_exhaustion_stops_with_warning():
    full = synth_1d(0)
    idx = np.arange(5)
    task = RegressionTask(full.pool_X[idx], full.pool_y[idx], full.context_X, full.test_X, full.test_y,
                          np.array([0, 1, 2]), 0)
    recs = run_regression(task, GpModelConfig(), AcquisitionConfig("Random"), 10)
    assert len(recs) == 3
    assert recs[-1].warning and "pool exhausted" in recs[-1].warning
    assert sorted(r.chosen for r in recs[1:]) == [3, 4]


def test_seed_streams_are_isolated():
    assert derive_seed(0, 1, "EVR").generate_state(2).tolist() == derive_seed(0, 1, "EVR").generate_state(2).tolist()
    assert derive_seed(0, 1, "EVR").generate_state(2).tolist() != derive_seed(0, 1, "Random").generate_state(2).tolist()
    task = synth_1d(3)
    alone = run_regression(task, GpModelConfig(), AcquisitionConfig("Random"), 4)
    run_regression(synth_1d(7), GpModelConfig(), AcquisitionConfig("Random"), 4)
    again = run_regression(task, GpModelConfig(), AcquisitionConfig("Random"), 4)
    assert [r.chosen for r in alone] == [r.chosen for r in again]
    # methods share the initial model, so round-0 metrics agree
    evr = run_regression(task, GpModelConfig(), AcquisitionConfig("EVR"), 0)
    assert evr[0].metrics == alone[0].metrics
