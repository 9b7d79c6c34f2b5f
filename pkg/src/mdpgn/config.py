"""Strict experiment configuration (a JSON object; unknown keys are errors)."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

from .exceptions import ConfigError
from .optimizers import RULE_KINDS, SCHEDULE_KINDS, StepSchedule, UpdateRule

ENVIRONMENTS = {
    "hallway": {"goal_reward", "discount"},
    "mccallum": {"goal_reward", "discount"},
    "random_tabular": {"states", "actions", "discount", "features", "instance_seed", "sparsity"},
    "cartpole": {"episodes", "critic_episodes", "gradient", "solver", "solver_iterations", "centers"},
    "navigation": {"episodes", "reward_width", "horizon"},
    "tetris": {"width", "height", "games", "max_steps"},
}
POLICIES = {
    "gibbs": set(),
    "tabular_softmax": set(),
    "gaussian": {"sigma", "bin_edges", "learn_sigma"},
}
TOP_LEVEL = {
    "environment", "policy", "rule", "schedule", "iterations", "repeats", "seed",
    "init", "estimator", "diagnostics", "checkpoints",
}
RULE_KEYS = {"kind", "ridge", "diag_floor", "cg_iterations", "cg_mode", "fd_epsilon"}
SCHEDULE_KEYS = {"kind", "alpha", "steps", "normalize"}
INIT_KEYS = {"kind", "scale", "low", "high", "value"}
ESTIMATOR_KEYS = {"trajectories", "horizon"}
DIAGNOSTIC_KEYS = {"hessian", "timing"}


@dataclass
class ExperimentConfig:
    environment: str
    env_params: dict
    policy: str
    policy_params: dict
    rule: UpdateRule
    schedule: StepSchedule
    iterations: int
    repeats: int = 1
    seed: int = 0
    init: dict = field(default_factory=lambda: {"kind": "zeros"})
    estimator: dict = field(default_factory=dict)
    hessian_diagnostics: bool = False
    timing: bool = False
    checkpoints: list = field(default_factory=list)
    raw: dict = field(default_factory=dict)


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object, got {type(obj).__name__}")
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(extra)}")


def _int(value, where, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where}: must be >= {minimum}, got {value}")
    return value


def _num(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _named_section(doc, key, table):
    sec = doc.get(key)
    if sec is None:
        raise ConfigError(f"{key}: missing")
    if isinstance(sec, str):
        sec = {"id": sec}
    if not isinstance(sec, dict) or "id" not in sec:
        raise ConfigError(f"{key}: expected an object with an 'id'")
    ident = sec["id"]
    if ident not in table:
        raise ConfigError(f"{key}.id: unknown value {ident!r}; expected one of {sorted(table)}")
    _check_keys(sec, table[ident] | {"id"}, key)
    params = {k: v for k, v in sec.items() if k != "id"}
    return ident, params


def parse_config(doc):
    """Validate a config object and build an :class:`ExperimentConfig`."""
    _check_keys(doc, TOP_LEVEL, "config")
    env, env_params = _named_section(doc, "environment", ENVIRONMENTS)
    pol, pol_params = _named_section(doc, "policy", POLICIES)
    for k in ("states", "actions", "features", "episodes", "critic_episodes", "width", "height",
              "games", "max_steps", "solver_iterations", "centers", "horizon"):
        if k in env_params:
            _int(env_params[k], f"environment.{k}", 1)
    for k in ("discount", "goal_reward", "sparsity", "reward_width"):
        if k in env_params:
            _num(env_params[k], f"environment.{k}")
    if "sigma" in pol_params and _num(pol_params["sigma"], "policy.sigma") <= 0:
        raise ConfigError("policy.sigma: must be positive")

    rule_doc = doc.get("rule", {"kind": "gauss_newton_2"})
    if isinstance(rule_doc, str):
        rule_doc = {"kind": rule_doc}
    _check_keys(rule_doc, RULE_KEYS, "rule")
    if rule_doc.get("kind", "gauss_newton_2") not in RULE_KINDS:
        raise ConfigError(f"rule.kind: unknown value {rule_doc.get('kind')!r}; expected one of {list(RULE_KINDS)}")
    try:
        rule = UpdateRule(**rule_doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"rule: {exc}") from exc

    sched_doc = doc.get("schedule", {"kind": "constant", "alpha": 1.0})
    _check_keys(sched_doc, SCHEDULE_KEYS, "schedule")
    if sched_doc.get("kind", "constant") not in SCHEDULE_KINDS:
        raise ConfigError(f"schedule.kind: unknown value {sched_doc.get('kind')!r}; expected one of {list(SCHEDULE_KINDS)}")
    if "alpha" in sched_doc and _num(sched_doc["alpha"], "schedule.alpha") <= 0:
        raise ConfigError("schedule.alpha: must be positive")
    if "steps" in sched_doc:
        steps = sched_doc["steps"]
        if not isinstance(steps, list) or not steps:
            raise ConfigError("schedule.steps: expected a non-empty list")
        if any(_num(s, "schedule.steps[]") <= 0 for s in steps):
            raise ConfigError("schedule.steps: all candidate steps must be positive")
        sched_doc = dict(sched_doc, steps=tuple(float(s) for s in steps))
    schedule = StepSchedule(**sched_doc)

    init = doc.get("init", {"kind": "zeros"})
    _check_keys(init, INIT_KEYS, "init")
    if init.get("kind", "zeros") not in ("zeros", "normal", "uniform", "value"):
        raise ConfigError(f"init.kind: unknown value {init.get('kind')!r}")
    estimator = doc.get("estimator", {})
    _check_keys(estimator, ESTIMATOR_KEYS, "estimator")
    for k, v in estimator.items():
        _int(v, f"estimator.{k}", 1)
    diag = doc.get("diagnostics", {})
    _check_keys(diag, DIAGNOSTIC_KEYS, "diagnostics")
    checkpoints = doc.get("checkpoints", [])
    if not isinstance(checkpoints, list):
        raise ConfigError("checkpoints: expected a list of iteration indices")
    for c in checkpoints:
        _int(c, "checkpoints[]", 0)

    return ExperimentConfig(
        environment=env, env_params=env_params, policy=pol, policy_params=pol_params,
        rule=rule, schedule=schedule,
        iterations=_int(doc.get("iterations", 0), "iterations", 0),
        repeats=_int(doc.get("repeats", 1), "repeats", 1),
        seed=_int(doc.get("seed", 0), "seed", 0),
        init=dict(init), estimator=dict(estimator),
        hessian_diagnostics=bool(diag.get("hessian", False)),
        timing=bool(diag.get("timing", False)),
        checkpoints=list(checkpoints), raw=copy.deepcopy(doc),
    )


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return parse_config(doc)


def set_path(doc, path, value):
    """Return a copy of ``doc`` with the dotted ``path`` set to ``value``."""
    out = copy.deepcopy(doc)
    node = out
    keys = path.split(".")
    for k in keys[:-1]:
        if k not in node or not isinstance(node[k], dict):
            if k not in node:
                node[k] = {}
            elif isinstance(node[k], str):
                node[k] = {("kind" if k == "rule" else "id"): node[k]}
        node = node[k]
    node[keys[-1]] = value
    return out
