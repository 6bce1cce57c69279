"""Command-line front end.

    lossal run CONFIG                       run an experiment, write results
    lossal plotdata RESULTS --metric M --out PATH
    lossal selftest                         oracle and invariant checks

Exit codes: 0 success, 1 selftest failure, 2 bad config / input,
3 numerical failure during a run. ``LOSSAL_OUTPUT_DIR`` overrides the
configured output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import datasets
from .acquisition import AcquisitionConfig
from .config import ConfigError, build_weight, dump_config, load_config
from .datasets import DataValidationError
from .loop import ForestConfig, GpModelConfig, RoundError, derive_seed, run_classification, run_regression

log = logging.getLogger("lossal")

OUTPUT_ENV = "LOSSAL_OUTPUT_DIR"
RESULT_COLUMNS = ("seed", "method", "round", "metric", "value")


def fmt(v) -> str:
    """Round-trip-safe decimal text for a float."""
    return repr(float(v))


def sem(values) -> float:
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return 0.0
    return float(values.std(ddof=1) / np.sqrt(len(values)))


# --------------------------------------------------------------------------
# run


def build_task(cfg: dict, seed: int):
    t = cfg["task"]
    kind = t["kind"]
    if kind == "synth_1d":
        return datasets.synth_1d(seed, 3 if t["n_initial"] is None else t["n_initial"])
    if kind == "synth_classification":
        return datasets.synth_classification(seed, n_per_class=t["n_per_class"],
                                             n_initial_per_class=t["n_initial_per_class"],
                                             class_weights=tuple(t["class_weights"] or (50.0, 1.0, 1.0, 50.0)))
    if kind == "csv_regression":
        return datasets.load_csv_regression(t["path"], t["target_column"], t["test_size"], seed,
                                            10 if t["n_initial"] is None else t["n_initial"],
                                            t["n_contexts"], t["contexts"])
    counts = t["per_class_counts"]
    return datasets.load_csv_classification(t["path"], t["target_column"],
                                            counts if isinstance(counts, int) else tuple(counts), seed,
                                            t["n_initial_per_class"], tuple(t["class_weights"]))


def _acq_config(cfg: dict, method: str) -> AcquisitionConfig:
    a = cfg["acquisition"]
    return AcquisitionConfig(method, build_weight(cfg["weight"]), a["n_contexts"], a["n_y_draws"],
                             a["n_z_draws"], a["linex_alpha"])


def run_one(cfg: dict, task, method: str):
    """RoundRecords for one (task, method) pair."""
    acq_cfg = _acq_config(cfg, method)
    m = cfg["model"]
    ev = cfg["evaluation"]
    if m["kind"] == "forest":
        eval_weights = None if ev["weight"] is None else build_weight(ev["weight"]).values or None
        return run_classification(task, ForestConfig(m["n_trees"]), acq_cfg, cfg["rounds"], eval_weights)
    model = GpModelConfig(m["kernel"], m["lengthscale"], m["variance"], m["noise"], m["mean_const"], m["nu"])
    eval_weight = None if ev["weight"] is None else build_weight(ev["weight"])
    return run_regression(task, model, acq_cfg, cfg["rounds"], eval_weight, ev["linex_alpha"])


def record_rows(seed: int, records) -> list[tuple]:
    rows = []
    for rec in records:
        values = dict(rec.metrics)
        if rec.class_counts is not None:
            values.update({f"count_class_{k}": c for k, c in enumerate(rec.class_counts)})
        rows.extend((seed, rec.method, rec.round, name, float(v)) for name, v in values.items())
    return rows


def write_results(path: Path, rows):
    rows = sorted(rows, key=lambda r: (r[0], r[1], r[2], r[3]))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for seed, method, rnd, metric, value in rows:
            w.writerow((seed, method, rnd, metric, fmt(value)))


def summarise(final: dict) -> dict:
    """{method: {metric: {mean, sem, n}}} from {(method, metric): [final values]}."""
    out: dict = defaultdict(dict)
    for (method, metric), vals in sorted(final.items()):
        out[method][metric] = {"mean": float(np.mean(vals)), "sem": sem(vals), "n": len(vals)}
    return dict(out)


def derived_seeds(cfg: dict) -> dict:
    """First-round acquisition seed state per (seed, method); recorded for audit."""
    return {int(s): {m: int(derive_seed(s, 0, m).generate_state(1)[0]) for m in cfg["methods"]}
            for s in cfg["seeds"]}


def cmd_run(config_path) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as err:
        print(f"{config_path}: config error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"{config_path}: {err}", file=sys.stderr)
        return 2
    out = Path(os.environ.get(OUTPUT_ENV) or cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    rows, final, warnings = [], defaultdict(list), []
    for seed in cfg["seeds"]:
        try:
            task = build_task(cfg, seed)
        except (DataValidationError, OSError) as err:
            print(f"data error (seed={seed}): {err}", file=sys.stderr)
            return 2
        for method in cfg["methods"]:
            try:
                records = run_one(cfg, task, method)
            except RoundError as err:
                print(f"numerical error at seed={err.seed} method={err.method} round={err.round}: "
                      f"{err.cause}", file=sys.stderr)
                return 3
            log.info("seed %d %s: %d rounds", seed, method, len(records) - 1)
            rows.extend(record_rows(seed, records))
            warnings.extend(f"seed={seed} method={method} round={r.round}: {r.warning}"
                            for r in records if r.warning)
            for name, v in records[-1].metrics.items():
                final[(method, name)].append(float(v))
    write_results(out / "results.csv", rows)
    lock = dict(cfg, output_dir=str(out), derived_seeds=derived_seeds(cfg))
    (out / "config.lock").write_text(dump_config(lock), encoding="utf-8")
    summary = {"rounds": cfg["rounds"], "seeds": cfg["seeds"], "final": summarise(final), "warnings": warnings}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    for w in warnings:
        log.warning(w)
    print(f"wrote {len(rows)} rows to {out / 'results.csv'}")
    return 0


# --------------------------------------------------------------------------
# plotdata


def read_results(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise DataValidationError(f"{path}: expected columns {RESULT_COLUMNS}, got {reader.fieldnames}")
        return list(reader)


def plot_table(rows: list[dict], metric: str) -> list[tuple]:
    """Per (method, round) mean and SEM across seeds."""
    groups = defaultdict(list)
    for r in rows:
        if r["metric"] == metric:
            groups[(r["method"], int(r["round"]))].append(float(r["value"]))
    return [(m, rnd, float(np.mean(v)), sem(v)) for (m, rnd), v in sorted(groups.items())]


def cmd_plotdata(results, metric: str, out) -> int:
    try:
        rows = read_results(results)
    except (OSError, DataValidationError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    known = sorted({r["metric"] for r in rows})
    if metric not in known:
        print(f"error: unknown metric {metric!r}; results contain {known}", file=sys.stderr)
        return 2
    with open(out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("method", "round", "mean", "sem"))
        for m, rnd, mean, s in plot_table(rows, metric):
            w.writerow((m, rnd, fmt(mean), fmt(s)))
    return 0


# --------------------------------------------------------------------------


def cmd_selftest() -> int:
    from .selftest import run_all
    return 0 if run_all(verbose=True) else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lossal", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run an experiment from a YAML config")
    p.add_argument("config")
    p = sub.add_parser("plotdata", help="per-round mean and SEM of one metric")
    p.add_argument("results")
    p.add_argument("--metric", required=True)
    p.add_argument("--out", required=True)
    sub.add_parser("selftest", help="run the oracle and invariant checks")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "plotdata":
        return cmd_plotdata(args.results, args.metric, args.out)
    return cmd_selftest()


if __name__ == "__main__":
    sys.exit(main())
