"""Experiment configuration: a YAML tree validated against a fixed schema.

Every key has a default, so a minimal file only names what differs. The
resolved tree (all defaults filled in) is what ``config.lock`` records, and
a lock file is itself a valid config that reproduces the run.

Example::

    task:
      kind: synth_1d
    model:
      kind: gp
      kernel: rbf
    methods: [Random, EVR, EVRw]
    weight: {kind: exp_pos, alpha: 1.0}
    rounds: 25
    seeds: [0, 1, 2]
    output_dir: results/synth
"""

from __future__ import annotations

import copy

import yaml

from .acquisition import METHODS
from .losses import WeightFunction

TASK_KINDS = ("synth_1d", "synth_classification", "csv_regression", "csv_classification")
WEIGHT_KINDS = ("constant", "exp_pos", "exp_neg", "class_weights")
REGRESSION_METHODS = ("Random", "EVR", "EVRw", "Linex")
CLASSIFICATION_METHODS = ("Random", "EPIG", "EPIGw")

_WEIGHT = {"kind": "constant", "alpha": 1.0, "values": [], "value": 1.0}

SCHEMA = {
    "task": {
        "kind": "synth_1d",
        "path": None,
        "target_column": None,
        "test_size": 20,
        "n_initial": None,            # 3 for synth_1d, 10 for csv_regression
        "contexts": "sample",
        "n_contexts": None,
        "per_class_counts": 15,       # int or [test, context]
        "n_initial_per_class": 5,
        "n_per_class": 100,           # synthetic classification
        "class_weights": [],          # synth_classification falls back to (50, 1, 1, 50)
    },
    "model": {
        "kind": "gp",
        "kernel": "rbf",
        "lengthscale": 1.0,
        "variance": 1.0,
        "noise": 0.04,
        "mean_const": 0.0,
        "nu": 1.5,
        "n_trees": 100,
    },
    "methods": ["Random", "EVR"],
    "weight": _WEIGHT,
    "evaluation": {
        "weight": None,               # None: same as the acquisition weight
        "linex_alpha": 1.0,
    },
    "acquisition": {
        "n_y_draws": 64,
        "n_z_draws": 256,
        "n_contexts": None,
        "linex_alpha": 1.0,
    },
    "rounds": 25,
    "seeds": [0],
    "output_dir": "results",
    "derived_seeds": None,            # written by config.lock, ignored on input
}

# sub-trees whose keys are validated against _WEIGHT
_WEIGHT_PATHS = {("weight",), ("evaluation", "weight")}


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line, self.key = line, key
        super().__init__(f"line {line}: {message}" if line else message)


def _check_keys(node, schema, path=()):
    """Reject keys not in the schema, using YAML node marks for line numbers."""
    if not isinstance(node, yaml.MappingNode):
        return
    for k_node, v_node in node.value:
        key = k_node.value
        dotted = ".".join(path + (key,))
        if not isinstance(schema, dict) or key not in schema:
            raise ConfigError(f"unknown key '{dotted}'", k_node.start_mark.line + 1, dotted)
        sub = _WEIGHT if path + (key,) in _WEIGHT_PATHS else schema[key]
        if isinstance(sub, dict):
            if not isinstance(v_node, (yaml.MappingNode, yaml.ScalarNode)) or (
                    isinstance(v_node, yaml.ScalarNode) and v_node.tag != "tag:yaml.org,2002:null"):
                raise ConfigError(f"'{dotted}' must be a mapping", v_node.start_mark.line + 1, dotted)
            _check_keys(v_node, sub, path + (key,))


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    for k, v in (given or {}).items():
        if isinstance(out.get(k), dict) and isinstance(v, dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_config(text: str) -> dict:
    """Parse and validate a config document; returns the resolved tree."""
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as err:
        mark = getattr(err, "problem_mark", None)
        raise ConfigError(f"YAML syntax: {getattr(err, 'problem', err)}",
                          mark.line + 1 if mark else None) from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping", 1)
    _check_keys(node, SCHEMA)
    cfg = _merge(SCHEMA, raw)
    for path in _WEIGHT_PATHS:
        parent = cfg
        for k in path[:-1]:
            parent = parent[k]
        if parent[path[-1]] is not None:
            parent[path[-1]] = _merge(_WEIGHT, parent[path[-1]])
    cfg["derived_seeds"] = None
    _validate(cfg)
    return cfg


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def _need(cond, message, key):
    if not cond:
        raise ConfigError(message, key=key)


def _validate(cfg: dict):
    task, model = cfg["task"], cfg["model"]
    _need(task["kind"] in TASK_KINDS, f"task.kind must be one of {TASK_KINDS}", "task.kind")
    classification = task["kind"] in ("synth_classification", "csv_classification")
    if task["kind"].startswith("csv"):
        _need(task["path"] and task["target_column"], "csv tasks need task.path and task.target_column",
              "task.path")
    _need(task["contexts"] in ("sample", "test"), "task.contexts must be 'sample' or 'test'", "task.contexts")
    _need(model["kind"] in ("gp", "forest"), "model.kind must be 'gp' or 'forest'", "model.kind")
    _need(model["kind"] == ("forest" if classification else "gp"),
          f"task {task['kind']} needs model.kind {'forest' if classification else 'gp'}", "model.kind")
    _need(model["kernel"] in ("rbf", "linear_matern"), "model.kernel must be 'rbf' or 'linear_matern'",
          "model.kernel")
    allowed = CLASSIFICATION_METHODS if classification else REGRESSION_METHODS
    methods = cfg["methods"]
    _need(isinstance(methods, list) and methods, "methods must be a non-empty list", "methods")
    for m in methods:
        _need(m in METHODS and m in allowed, f"method {m!r} not available for {task['kind']} (use {allowed})",
              "methods")
    _need(len(set(methods)) == len(methods), "methods must not repeat", "methods")
    if "EPIGw" in methods:
        _need(cfg["weight"]["kind"] == "class_weights" or task["class_weights"]
              or task["kind"] == "synth_classification",
              "EPIGw needs class weights (weight.kind: class_weights or task.class_weights)", "weight")
    seeds = cfg["seeds"]
    _need(isinstance(seeds, list) and seeds and all(isinstance(s, int) and s >= 0 for s in seeds),
          "seeds must be a non-empty list of non-negative integers", "seeds")
    _need(len(set(seeds)) == len(seeds), "seeds must not repeat", "seeds")
    _need(isinstance(cfg["rounds"], int) and cfg["rounds"] >= 0, "rounds must be a non-negative integer",
          "rounds")
    for path in ("weight", "evaluation.weight"):
        weight_cfg = cfg["weight"] if path == "weight" else cfg["evaluation"]["weight"]
        if weight_cfg is not None:
            try:
                build_weight(weight_cfg)
            except (ValueError, TypeError) as err:
                raise ConfigError(f"{path}: {err}", key=path) from None


def build_weight(weight_cfg: dict) -> WeightFunction:
    kind = weight_cfg["kind"]
    if kind not in WEIGHT_KINDS:
        raise ValueError(f"kind must be one of {WEIGHT_KINDS}")
    if kind == "constant":
        return WeightFunction.constant(float(weight_cfg["value"]))
    if kind == "exp_pos":
        return WeightFunction.exp_pos(float(weight_cfg["alpha"]))
    if kind == "exp_neg":
        return WeightFunction.exp_neg(float(weight_cfg["alpha"]))
    return WeightFunction.class_weights([float(v) for v in weight_cfg["values"]])


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=False, default_flow_style=None)
