"""Write the small synthetic CSVs shipped in data/.

They stand in for tabular benchmarks: a skewed regression target (a few
high-value rows matter most under an exponential weight) and a multi-class
problem with one rare class.

    python3 scripts/make_synthetic_csvs.py [out_dir]
"""

import csv
import sys
from pathlib import Path

import numpy as np


def regression(rng, n=300, d=8):
    X = rng.normal(size=(n, d))
    beta = rng.normal(size=d) / np.sqrt(d)
    y = X @ beta + 0.5 * np.sin(2 * X[:, 0]) + np.exp(0.8 * X[:, 1]) / 3 + 0.1 * rng.normal(size=n)
    return X, y


def classification(rng, n=400, d=6, n_classes=3):
    sizes = [200, 140, 60]
    centres = rng.normal(scale=1.2, size=(n_classes, d))
    X = np.concatenate([c + rng.normal(size=(m, d)) for c, m in zip(centres, sizes)])
    y = np.repeat(np.arange(n_classes), sizes)
    perm = rng.permutation(len(y))
    return X[perm], y[perm]


def write(path, X, y, target):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j}" for j in range(X.shape[1])] + [target])
        for row, t in zip(X, y):
            w.writerow([f"{v:.6f}" for v in row] + [t if isinstance(t, (int, np.integer)) else f"{t:.6f}"])


def main(out="data"):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(7)
    write(out / "regression.csv", *regression(rng), "target")
    write(out / "classification.csv", *classification(rng), "label")


if __name__ == "__main__":
    main(*sys.argv[1:])
