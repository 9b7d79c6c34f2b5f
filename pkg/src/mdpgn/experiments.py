"""Seeded experiment execution and CSV output."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass

import numpy as np

from .calculus import hessian_decomposition
from .config import ExperimentConfig
from .envs.gridworlds import build_hallway, build_mccallum
from .exceptions import ConfigError
from .mdp import random_mdp
from .optimizers import ExactProblem, run_policy_search
from .policies import GaussianLinearPolicy, GibbsPolicy, TabularSoftmaxPolicy

RUN_COLUMNS = ("iteration", "return", "grad_norm", "step_size", "direction_norm", "wall_ms", "seed")
DIAG_COLUMNS = ("h12_norm", "a1_norm")


def repeat_seeds(master_seed, repeats):
    """Per-repeat seeds: ``SeedSequence(master).spawn(repeats)[k]`` reduced to one uint64."""
    children = np.random.SeedSequence(master_seed).spawn(repeats)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


@dataclass
class Setup:
    problem: object
    policy: object
    w0: np.ndarray
    mdp: object = None


def _init_params(cfg, dim, rng):
    init = cfg.init
    kind = init.get("kind", "zeros")
    if kind == "zeros":
        return np.zeros(dim)
    if kind == "normal":
        return float(init.get("scale", 1.0)) * rng.standard_normal(dim)
    if kind == "uniform":
        low = np.broadcast_to(np.asarray(init.get("low", -1.0), dtype=float), (dim,))
        high = np.broadcast_to(np.asarray(init.get("high", 1.0), dtype=float), (dim,))
        return rng.uniform(low, high)
    value = np.asarray(init.get("value"), dtype=float)
    if value.shape != (dim,):
        raise ConfigError(f"init.value: expected {dim} entries, got shape {value.shape}")
    return value


def _tabular_policy(cfg, mdp, feats, rng):
    pp = cfg.policy_params
    if cfg.policy == "tabular_softmax":
        return TabularSoftmaxPolicy(mdp.num_states, mdp.num_actions)
    if cfg.policy == "gibbs":
        return GibbsPolicy(feats)
    edges = pp.get("bin_edges")
    if edges is None or len(edges) != mdp.num_actions - 1:
        raise ConfigError(f"policy.bin_edges: need {mdp.num_actions - 1} edges for {mdp.num_actions} actions")
    table = feats.mean(axis=1)
    return GaussianLinearPolicy(table, float(pp.get("sigma", 1.0)), bool(pp.get("learn_sigma", False)), edges)


def build_setup(cfg: ExperimentConfig, seed):
    """Problem, policy and initial parameters for one repeat.

    Tabular environments use exact calculus and ignore ``estimator``.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    env, ep = cfg.environment, dict(cfg.env_params)
    # estimator settings override the per-environment batch size and horizon
    est = cfg.estimator
    if "trajectories" in est:
        ep[{"tetris": "games"}.get(env, "episodes")] = est["trajectories"]
    if "horizon" in est:
        ep[{"tetris": "max_steps"}.get(env, "horizon")] = est["horizon"]
    if env in ("hallway", "mccallum"):
        from .envs import gridworlds

        spec = gridworlds.hallway_spec() if env == "hallway" else gridworlds.mccallum_spec()
        kw = {k: ep[k] for k in ("goal_reward", "discount") if k in ep}
        if kw:
            spec = spec.__class__(**{**spec.__dict__, **kw})
        mdp, feats = gridworlds.gridworld_mdp(spec)
        policy = _tabular_policy(cfg, mdp, feats, rng)
        return Setup(ExactProblem(mdp, policy), policy, _init_params(cfg, policy.dim, rng), mdp)
    if env == "random_tabular":
        inst = np.random.default_rng(ep.get("instance_seed", seed))
        mdp = random_mdp(inst, ep.get("states", 4), ep.get("actions", 3), ep.get("discount", 0.9),
                         sparsity=ep.get("sparsity", 0.0))
        feats = inst.normal(size=(mdp.num_states, mdp.num_actions, ep.get("features", 3)))
        policy = _tabular_policy(cfg, mdp, feats, rng)
        return Setup(ExactProblem(mdp, policy), policy, _init_params(cfg, policy.dim, rng), mdp)
    if cfg.policy != "gaussian" and env in ("cartpole", "navigation"):
        raise ConfigError(f"policy.id: environment {env!r} needs the 'gaussian' policy")
    if env == "cartpole":
        from .envs.cartpole import CartPoleParams, CartPoleProblem, RbfFeatures

        feats = RbfFeatures.random(rng, ep.get("centers", 100))
        policy = GaussianLinearPolicy(feats, float(cfg.policy_params.get("sigma", 2.0)), num_features=feats.dim)
        kw = {k: ep[k] for k in ("episodes", "critic_episodes", "gradient", "solver", "solver_iterations") if k in ep}
        try:
            params = CartPoleParams(horizon=ep["horizon"]) if "horizon" in ep else CartPoleParams()
            problem = CartPoleProblem(policy, params, **kw)
        except ValueError as exc:
            raise ConfigError(f"environment: {exc}") from exc
        return Setup(problem, policy, _init_params(cfg, policy.dim, rng))
    if env == "navigation":
        from .envs.navigation import NavigationParams, NavigationProblem, navigation_policy

        params = NavigationParams(**{k: ep[k] for k in ("reward_width", "horizon") if k in ep})
        policy = navigation_policy(float(cfg.policy_params.get("sigma", 1.0)))
        problem = NavigationProblem(policy, params, ep.get("episodes", 50))
        return Setup(problem, policy, _init_params(cfg, policy.dim, rng))
    if env == "tetris":
        from .envs.tetris import TetrisProblem

        if cfg.policy != "gibbs":
            raise ConfigError("policy.id: tetris uses the 'gibbs' placement policy")
        problem = TetrisProblem(ep.get("width", 6), ep.get("height", 6), ep.get("games", 200), ep.get("max_steps", 1000))
        return Setup(problem, None, _init_params(cfg, problem.dim, rng))
    raise ConfigError(f"environment.id: unknown value {env!r}")


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def trace_csv(trace, diagnostics):
    cols = list(RUN_COLUMNS[:-2]) + (list(DIAG_COLUMNS) if diagnostics else []) + ["wall_ms", "seed"]
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(cols)
    for row in trace.rows:
        wr.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue(), cols


def aggregate_rows(traces, master_seed, diagnostics):
    """Per-iteration mean over the repeats that reached the iteration, with the SE of the return."""
    cols = ["iteration", "return", "return_se", "grad_norm", "step_size", "direction_norm"]
    cols += list(DIAG_COLUMNS) if diagnostics else []
    cols += ["wall_ms", "seed"]
    n_iter = max(len(t.rows) for t in traces)
    rows = []
    for i in range(n_iter):
        present = [t.rows[i] for t in traces if len(t.rows) > i]
        rets = np.array([r["return"] for r in present], dtype=float)
        se = float(rets.std(ddof=1) / np.sqrt(len(rets))) if len(rets) > 1 else 0.0
        row = {"iteration": i, "return": float(rets.mean()), "return_se": se, "seed": master_seed}
        for c in cols:
            if c not in row:
                row[c] = float(np.mean([r[c] for r in present]))
        rows.append(row)
    return cols, rows


def aggregate_csv(traces, master_seed, diagnostics):
    cols, rows = aggregate_rows(traces, master_seed, diagnostics)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(cols)
    for row in rows:
        wr.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


@dataclass
class ExperimentResult:
    traces: list
    finals: list
    seeds: list
    files: list


def run_experiment(cfg: ExperimentConfig, out_dir=None):
    """Run every repeat; write ``run_<k>.csv`` files and ``aggregate.csv`` into ``out_dir``."""
    seeds = repeat_seeds(cfg.seed, cfg.repeats)
    traces, finals, files = [], [], []
    diagnostics = cfg.hessian_diagnostics
    for k, seed in enumerate(seeds):
        setup = build_setup(cfg, seed)
        w, trace = run_policy_search(setup.problem, setup.w0, cfg.rule, cfg.schedule, cfg.iterations,
                                     seed=seed, diagnostics=diagnostics, timing=cfg.timing)
        traces.append(trace)
        finals.append(w)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for k, trace in enumerate(traces):
            text, _ = trace_csv(trace, diagnostics)
            path = os.path.join(out_dir, f"run_{k}.csv")
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            files.append(path)
        path = os.path.join(out_dir, "aggregate.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(aggregate_csv(traces, cfg.seed, diagnostics))
        files.append(path)
    return ExperimentResult(traces, finals, seeds, files)


HESSIAN_COLUMNS = ("iteration", "distance", "log_h12_norm", "log_a1_norm", "ratio_a1_h12")


def _safe_log(x):
    return math.log(x) if x > 0 else float("-inf")


def hessian_diagnostics(cfg: ExperimentConfig, out_dir=None):
    """Distance to the final iterate and log spectral norms at checkpoints.

    The final iterate of a run with the configured rule serves as the
    reference optimum. Returns the list of row dicts.
    """
    if cfg.environment not in ("hallway", "mccallum", "random_tabular"):
        raise ConfigError(f"environment.id: hessian diagnostics need a tabular environment, got {cfg.environment!r}")
    seed = repeat_seeds(cfg.seed, 1)[0]
    setup = build_setup(cfg, seed)
    w_star, trace = run_policy_search(setup.problem, setup.w0, cfg.rule, cfg.schedule, cfg.iterations, seed=seed)
    checkpoints = cfg.checkpoints or list(range(len(trace.iterates)))
    rows = []
    for c in checkpoints:
        if c >= len(trace.iterates):
            continue
        w = trace.iterates[c]
        hd = hessian_decomposition(setup.mdp, setup.policy, w)
        h12 = float(np.linalg.norm(hd.cross, 2))
        a1 = float(np.linalg.norm(hd.A1, 2))
        rows.append({
            "iteration": c, "distance": float(np.linalg.norm(w - w_star)),
            "log_h12_norm": _safe_log(h12), "log_a1_norm": _safe_log(a1),
            "ratio_a1_h12": a1 / h12 if h12 > 0 else (float("nan") if a1 == 0 else float("inf")),
        })
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(HESSIAN_COLUMNS)
        for r in rows:
            wr.writerow([_fmt(r[c]) for c in HESSIAN_COLUMNS])
        with open(os.path.join(out_dir, "hessian_diagnostics.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
    return rows
