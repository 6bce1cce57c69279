"""Bagged Gini decision trees; each tree is one posterior sample theta_i.

Leaves store Laplace-smoothed class frequencies (count + 1) / (n + K) so that
every member probability is strictly positive and logs stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class UntrainedEnsembleError(RuntimeError):
    pass


@dataclass
class DecisionTree:
    feature: np.ndarray    # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray      # (n_nodes, K) leaf probabilities

    @property
    def depth(self) -> int:
        depth = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=int)
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return self.value[node]
            rows = np.nonzero(inner)[0]
            go_left = X[rows, f[inner]] <= self.threshold[node[inner]]
            node[rows] = np.where(go_left, self.left[node[inner]], self.right[node[inner]])


def _best_split(Xn: np.ndarray, onehot: np.ndarray, features) -> tuple[int, float, float] | None:
    """Feature/threshold minimising weighted Gini impurity, or None if unsplittable."""
    n = len(Xn)
    best = None
    sizes = np.arange(1, n)
    for f in features:
        order = np.argsort(Xn[:, f], kind="stable")
        xs = Xn[order, f]
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        left = np.cumsum(onehot[order], axis=0)[:-1]
        right = left[-1] + onehot[order[-1]] - left
        # impurity * n = n - sum(left^2)/n_l - sum(right^2)/n_r
        purity = (left * left).sum(1) / sizes + (right * right).sum(1) / (n - sizes)
        purity[~valid] = -np.inf
        k = int(np.argmax(purity))
        if best is None or purity[k] > best[2]:
            best = (int(f), 0.5 * (xs[k] + xs[k + 1]), float(purity[k]))
    return best


def _grow(X: np.ndarray, y: np.ndarray, n_classes: int, max_features: int, rng: np.random.Generator) -> DecisionTree:
    feature, threshold, left, right, value = [], [], [], [], []
    onehot_all = np.eye(n_classes)[y]
    D = X.shape[1]

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(None)
        return len(feature) - 1

    stack = [(new_node(), np.arange(len(y)))]
    while stack:
        node, idx = stack.pop()
        counts = onehot_all[idx].sum(0)
        value[node] = (counts + 1.0) / (len(idx) + n_classes)
        if np.count_nonzero(counts) <= 1:
            continue
        perm = rng.permutation(D)
        split = _best_split(X[idx], onehot_all[idx], perm[:max_features])
        if split is None and max_features < D:
            # sampled features are all constant here; fall back to the rest
            split = _best_split(X[idx], onehot_all[idx], perm[max_features:])
        if split is None:
            continue
        f, thr, _ = split
        mask = X[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        left[node], right[node] = new_node(), new_node()
        stack.append((right[node], idx[~mask]))
        stack.append((left[node], idx[mask]))
    return DecisionTree(np.array(feature), np.array(threshold), np.array(left), np.array(right), np.array(value))


@dataclass
class TreeEnsemble:
    trees: list
    n_classes: int
    in_bag: np.ndarray  # (n_trees, n_train) bootstrap multiplicities
    seed: int | None = None

    def member_probs(self, X) -> np.ndarray:
        """p(z | x, theta_i) for every tree; shape (n_trees, n, K)."""
        if not self.trees:
            raise UntrainedEnsembleError("ensemble has no trees")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack([t.predict_proba(X) for t in self.trees])

    def posterior_predictive(self, X) -> np.ndarray:
        return self.member_probs(X).mean(0)

    def weighted_predictive(self, X, class_weights) -> np.ndarray:
        """p_w(z | x) proportional to w(z) p(z | x)."""
        p = self.posterior_predictive(X) * np.asarray(class_weights, dtype=float)
        return p / p.sum(-1, keepdims=True)

    def oob_accuracy(self, X, y) -> float:
        """Accuracy of out-of-bag votes on the training set (rows never out of bag are skipped)."""
        P = self.member_probs(X)
        oob = (self.in_bag == 0)[:, :, None]
        votes = (P * oob).sum(0)
        seen = oob[:, :, 0].any(0)
        return float(np.mean(votes[seen].argmax(1) == np.asarray(y)[seen]))


def train_ensemble(X, y, n_trees: int = 100, seed: int = 0, n_classes: int | None = None) -> TreeEnsemble:
    """Fit ``n_trees`` Gini trees on bootstrap resamples with sqrt(D) features per split."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y)
    if len(y) == 0:
        raise ValueError("empty training set")
    if len(X) != len(y):
        raise ValueError("X and y lengths differ")
    y = y.astype(int)
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if y.min() < 0 or y.max() >= n_classes:
        raise ValueError("labels must lie in 0..n_classes-1")
    n, D = X.shape
    max_features = max(1, int(np.sqrt(D)))
    trees = []
    in_bag = np.zeros((n_trees, n), dtype=int)
    for t, child in enumerate(np.random.SeedSequence(seed).spawn(n_trees)):
        rng = np.random.Generator(np.random.Philox(child))
        idx = rng.integers(0, n, size=n)
        in_bag[t] = np.bincount(idx, minlength=n)
        trees.append(_grow(X[idx], y[idx], n_classes, max_features, rng))
    return TreeEnsemble(trees, n_classes, in_bag, seed)
