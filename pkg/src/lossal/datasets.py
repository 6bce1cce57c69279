"""Tasks for the active-learning loop.

Every label a run can observe is drawn when the task is built, so the
acquisition order never changes label values and methods sharing a task are
compared on identical data.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .gp import Standardizer

SYNTH_NOISE_VAR = 0.04
SYNTH_GRID = (65, 49, 97)  # candidates, contexts, test points on [-8, 8]


class DataValidationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RegressionTask:
    pool_X: np.ndarray
    pool_y: np.ndarray
    context_X: np.ndarray
    test_X: np.ndarray
    test_y: np.ndarray
    initial: np.ndarray          # indices into the pool
    seed: int
    name: str = "regression"
    noise_var: float | None = None
    standardizer: Standardizer | None = None


@dataclass(frozen=True, eq=False)
class ClassificationTask:
    pool_X: np.ndarray
    pool_y: np.ndarray
    context_X: np.ndarray
    test_X: np.ndarray
    test_y: np.ndarray
    initial: np.ndarray
    n_classes: int
    seed: int
    name: str = "classification"
    class_weights: tuple = field(default=())


def synth_function(x) -> np.ndarray:
    """2 sin(2x) + 8 N(x; 2.5, 0.5) + 10 N(x; 7.5, 0.25) - 6 N(x; -4.5, 0.5) (sd parameters)."""
    x = np.asarray(x, dtype=float)
    return (2.0 * np.sin(2.0 * x) + 8.0 * norm.pdf(x, 2.5, 0.5)
            + 10.0 * norm.pdf(x, 7.5, 0.25) - 6.0 * norm.pdf(x, -4.5, 0.5))


def synth_1d(seed: int, n_initial: int = 3) -> RegressionTask:
    rng = np.random.default_rng(seed)
    n_pool, n_ctx, n_test = SYNTH_GRID
    pool = np.linspace(-8.0, 8.0, n_pool)
    test = np.linspace(-8.0, 8.0, n_test)
    sd = np.sqrt(SYNTH_NOISE_VAR)
    pool_y = synth_function(pool) + sd * rng.standard_normal(n_pool)
    test_y = synth_function(test) + sd * rng.standard_normal(n_test)
    initial = np.sort(rng.choice(n_pool, size=n_initial, replace=False))
    return RegressionTask(pool[:, None], pool_y, np.linspace(-8.0, 8.0, n_ctx)[:, None], test[:, None], test_y,
                          initial, seed, "synth_1d", SYNTH_NOISE_VAR)


def synth_classification(seed: int, n_per_class: int = 100, test_per_class: int = 25,
                         context_per_class: int = 25, n_initial_per_class: int = 5,
                         class_weights=(50.0, 1.0, 1.0, 50.0)) -> ClassificationTask:
    """Four overlapping Gaussian classes in 2-D laid out on a square.

    Neighbouring classes overlap, so every class boundary carries label
    uncertainty and the high-weight classes are not trivially separable.
    """
    rng = np.random.default_rng(seed)
    centres = np.array([[0.0, 0.0], [1.6, 0.0], [1.6, 1.6], [0.0, 1.6]])
    n_classes = len(centres)
    X = np.concatenate([c + rng.standard_normal((n_per_class, 2)) for c in centres])
    y = np.repeat(np.arange(n_classes), n_per_class)
    return _stratified_task(X, y, n_classes, test_per_class, context_per_class, n_initial_per_class,
                            seed, rng, "synth_classification", tuple(class_weights))


def _stratified_task(X, y, n_classes, test_per_class, context_per_class, n_initial_per_class,
                     seed, rng, name, class_weights) -> ClassificationTask:
    test_idx, ctx_idx, init_idx, pool_idx = [], [], [], []
    for k in range(n_classes):
        members = np.nonzero(y == k)[0]
        need = test_per_class + n_initial_per_class
        if len(members) < max(need, test_per_class + context_per_class):
            raise DataValidationError(
                f"class {k} has {len(members)} examples; needs {test_per_class} test + "
                f"{n_initial_per_class} initial and {context_per_class} context examples")
        members = rng.permutation(members)
        test_idx.append(members[:test_per_class])
        rest = members[test_per_class:]
        ctx_idx.append(rng.permutation(rest)[:context_per_class])
        init_idx.append(rest[:n_initial_per_class])
        pool_idx.append(rest)
    pool_idx = np.sort(np.concatenate(pool_idx))
    init = np.sort(np.concatenate(init_idx))
    initial = np.searchsorted(pool_idx, init)
    test_idx = np.concatenate(test_idx)
    ctx_idx = np.concatenate(ctx_idx)
    return ClassificationTask(X[pool_idx], y[pool_idx], X[ctx_idx], X[test_idx], y[test_idx],
                              initial, n_classes, seed, name, class_weights)


def read_csv(path, target_column: str):
    """Numeric feature matrix and target vector from a headered CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if target_column not in header:
            raise DataValidationError(f"{path}: no column named {target_column!r} (have {header})")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataValidationError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            try:
                values = [float(cell) for cell in row]
            except ValueError as err:
                raise DataValidationError(f"{path}:{lineno}: non-numeric cell ({err})") from None
            if not all(np.isfinite(values)):
                raise DataValidationError(f"{path}:{lineno}: non-finite value")
            rows.append(values)
    if not rows:
        raise DataValidationError(f"{path}: no data rows")
    data = np.array(rows)
    t = header.index(target_column)
    features = [c for c in range(len(header)) if c != t]
    return data[:, features], data[:, t]


def load_csv_regression(path, target_column: str, test_size: int, seed: int, n_initial: int = 10,
                        n_contexts: int | None = None, contexts: str = "sample") -> RegressionTask:
    """Random test split; the rest is the pool. Features standardised on the pool.

    ``contexts="sample"`` draws ``n_contexts`` (default ``test_size``) context
    inputs from the pool inputs; ``contexts="test"`` reuses the test inputs.
    """
    X, y = read_csv(path, target_column)
    n = len(y)
    if not 0 < test_size < n:
        raise DataValidationError(f"test_size {test_size} must lie in 1..{n - 1}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    test_idx, pool_idx = np.sort(perm[:test_size]), np.sort(perm[test_size:])
    if n_initial > len(pool_idx):
        raise DataValidationError(f"pool of {len(pool_idx)} cannot supply {n_initial} initial labels")
    std = Standardizer.fit(X[pool_idx])
    Z = std(X)
    initial = np.sort(rng.choice(len(pool_idx), size=n_initial, replace=False))
    if contexts == "test":
        ctx = Z[test_idx]
    elif contexts == "sample":
        k = test_size if n_contexts is None else n_contexts
        ctx = Z[pool_idx[np.sort(rng.choice(len(pool_idx), size=min(k, len(pool_idx)), replace=False))]]
    else:
        raise ValueError("contexts must be 'sample' or 'test'")
    return RegressionTask(Z[pool_idx], y[pool_idx], ctx, Z[test_idx], y[test_idx], initial, seed,
                          str(path), None, std)


def load_csv_classification(path, target_column: str, per_class_counts, seed: int,
                            n_initial_per_class: int = 5, class_weights=()) -> ClassificationTask:
    """Stratified test/context subsamples of ``per_class_counts`` per class.

    ``per_class_counts`` is an int (same for test and contexts) or a
    ``(test, context)`` pair. Labels must be integers 0..K-1.
    """
    X, y = read_csv(path, target_column)
    if np.any(y != np.round(y)) or y.min() < 0:
        raise DataValidationError(f"{path}: class labels must be non-negative integers")
    y = y.astype(int)
    n_classes = int(y.max()) + 1
    if isinstance(per_class_counts, (int, np.integer)):
        test_pc = ctx_pc = int(per_class_counts)
    else:
        test_pc, ctx_pc = (int(v) for v in per_class_counts)
    rng = np.random.default_rng(seed)
    Z = Standardizer.fit(X)(X)
    if class_weights and len(class_weights) != n_classes:
        raise DataValidationError(f"{len(class_weights)} class weights for {n_classes} classes")
    return _stratified_task(Z, y, n_classes, test_pc, ctx_pc, n_initial_per_class, seed, rng,
                            str(path), tuple(class_weights))
