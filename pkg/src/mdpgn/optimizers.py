"""Search directions, step-size control and the generic ascent loop."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .calculus import evaluate, hessian_decomposition
from .exceptions import CGBreakdown, IndefinitePreconditioner, NumericalFailure
from .linalg import LinearOperator, conjugate_gradient, eigen_symmetric, solve_symmetric, symmetrize
from .policies import GaussianLinearPolicy, GibbsPolicy

logger = logging.getLogger(__name__)

RULE_KINDS = (
    "steepest", "natural", "gauss_newton_1", "gauss_newton_2",
    "diag_gn_1", "diag_gn_2", "cg_gn_2", "em",
)
SCHEDULE_KINDS = ("constant", "decaying", "two_point", "grid")
PAPER_STEP_GRID = (0.1, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0)


@dataclass(frozen=True)
class UpdateRule:
    kind: str = "gauss_newton_2"
    ridge: float = 0.0
    blockwise: tuple | None = None
    diag_floor: float = 1e-8
    cg_iterations: int | None = None
    cg_mode: str = "exact_mvp"
    fd_epsilon: float = 1e-6

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown update rule {self.kind!r}; expected one of {RULE_KINDS}")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")
        if self.cg_mode not in ("exact_mvp", "fd_mvp"):
            raise ValueError("cg_mode must be exact_mvp or fd_mvp")


@dataclass(frozen=True)
class StepSchedule:
    """Step-size policy.

    ``constant``: alpha. ``decaying``: alpha / (1 + t/100).
    ``two_point``: the decaying step, reverted if the estimated return drops.
    ``grid``: best step from ``steps`` along the normalized direction.
    """

    kind: str = "constant"
    alpha: float = 1.0
    steps: tuple = PAPER_STEP_GRID
    normalize: bool = False

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown step schedule {self.kind!r}")
        if self.alpha <= 0 or any(s <= 0 for s in self.steps):
            raise ValueError("step sizes must be positive")

    def base_step(self, t):
        if self.kind in ("decaying", "two_point"):
            return self.alpha / (1.0 + t / 100.0)
        return self.alpha


def _blockwise(M, blocks):
    if not blocks:
        return M
    out = np.zeros_like(M)
    for b in blocks:
        out[b, b] = M[b, b]
    return out


def _get(curv, name):
    value = getattr(curv, name, None)
    if value is None and isinstance(curv, dict):
        value = curv.get(name)
    if value is None:
        raise ValueError(f"update rule needs {name!r}, which the curvature input does not provide")
    return value


def _diag_direction(g, diag, floor):
    neg = -np.asarray(diag, dtype=float)
    eps = floor * max(float(np.max(np.abs(neg), initial=0.0)), 1e-300)
    small = neg < eps
    if np.any(small):
        logger.warning("diagonal preconditioner floored at %d coordinates", int(small.sum()))
    return g / np.where(small, eps, neg)


def compute_direction(rule, curv, g=None):
    """Search direction for ``rule`` from a gradient and curvature bundle.

    ``curv`` is a :class:`HessianDecomposition`, an estimate bundle or a
    dict exposing the matrices the rule needs (``H2``, ``A1``/``A2``,
    ``fisher``, ``h2_diag``).
    """
    g = np.asarray(_get(curv, "grad") if g is None else g, dtype=float)
    if not np.any(g):
        return np.zeros_like(g)
    kind = rule.kind
    if kind == "steepest":
        return g.copy()
    if kind == "natural":
        G = _blockwise(symmetrize(_get(curv, "fisher")), rule.blockwise)
        return solve_symmetric(G, g, rule.ridge)
    if kind == "gauss_newton_1":
        M = -_blockwise(symmetrize(_get(curv, "A1") + _get(curv, "A2")), rule.blockwise)
        if rule.ridge == 0.0:
            lam = float(eigen_symmetric(M)[0])
            if lam <= 0.0:
                raise IndefinitePreconditioner(
                    f"-(A1 + A2) is not positive definite (min eigenvalue {lam:.3g}); add a ridge", lam)
        return solve_symmetric(M, g, rule.ridge)
    if kind in ("gauss_newton_2", "cg_gn_2", "em"):
        M = -_blockwise(symmetrize(_get(curv, "H2")), rule.blockwise)
        return solve_symmetric(M, g, rule.ridge)
    if kind == "diag_gn_1":
        return _diag_direction(g, np.diag(_get(curv, "A1") + _get(curv, "A2")), rule.diag_floor)
    if kind == "diag_gn_2":
        diag = getattr(curv, "h2_diag", None)
        if diag is None:
            diag = np.diag(_get(curv, "H2"))
        return _diag_direction(g, diag, rule.diag_floor)
    raise ValueError(kind)


@dataclass
class CGDirection:
    direction: np.ndarray
    iterations: int
    iterates: list
    breakdown: bool = False


def exact_h2_weights(mdp, policy, w):
    """Fixed weights ``d(s) Q(s,a)`` for the finite-difference product."""
    ev = evaluate(mdp, policy, w)
    return ev.d[:, None] * ev.Q


def fd_h2_operator(policy, w, weights, eps=1e-6):
    """Operator ``p -> -H2 p`` from differences of expected scores.

    Uses ``(1/eps) sum d Q (E_w[psi(w)] - E_w[psi(w + eps p)])``; the
    sampling distribution and the weights stay at ``w``.
    """
    base = np.einsum("sa,san->n", weights, policy.cross_score(w, w))

    def matvec(p):
        shifted = np.einsum("sa,san->n", weights, policy.cross_score(w, w + eps * p))
        return (base - shifted) / eps

    return LinearOperator(policy.dim, matvec)


def cg_gauss_newton_direction(g, operator, k_max=None, x0=None, tol=1e-10):
    """Approximate ``(-H2)^{-1} g`` by conjugate gradient, warm-started at ``g``.

    ``operator`` applies ``-H2``: a matrix, a :class:`LinearOperator` or the
    result of :func:`fd_h2_operator`. On breakdown the last iterate is
    returned with the ``breakdown`` flag set.
    """
    g = np.asarray(g, dtype=float)
    if not isinstance(operator, LinearOperator):
        operator = LinearOperator.from_matrix(operator)
    x0 = g.copy() if x0 is None else x0
    try:
        res = conjugate_gradient(operator, g, x0=x0, max_iter=k_max, tol=tol, keep_iterates=True)
    except CGBreakdown as exc:
        logger.warning("CG breakdown: %s", exc)
        return CGDirection(exc.x, exc.iterations, [exc.x], True)
    return CGDirection(res.x, res.iterations, res.iterates)


def em_step_gaussian(mdp, policy, w_anchor, update_sigma=False, ridge=0.0):
    """Closed-form M-step for a Gaussian-linear policy on a binned tabular MDP.

    Mean weights solve ``(sum d V phi phi^T) w = sum d phi sum_j Q_j E[a ; j]``
    which is the weighted least-squares maximizer of the surrogate.
    """
    if not isinstance(policy, GaussianLinearPolicy):
        raise TypeError("em_step_gaussian needs a GaussianLinearPolicy")
    w_anchor = policy.check_params(w_anchor)
    ev = evaluate(mdp, policy, w_anchor)
    m1, _ = policy.bin_first_moments(w_anchor)
    phi = policy.table
    _, base_sigma = policy._split(w_anchor)
    scale = policy._scale(1.0, phi)  # per-state factor on sigma
    # the log-density of each state carries a 1/scale^2 weight
    k = ev.d * ev.V / scale**2
    lhs = np.einsum("s,si,sj->ij", k, phi, phi)
    rhs = phi.T @ (ev.d * np.sum(ev.Q * m1, axis=1) / scale**2)
    m = policy.num_features
    w_next = w_anchor.copy()
    w_next[:m] = solve_symmetric(lhs, rhs, ridge)
    if update_sigma and policy.learn_sigma:
        I, mu, sd = policy._bin_integrals(w_anchor)
        sq = policy._shifted_second_moment(I, mu, sd, phi @ w_next[:m])
        num = np.einsum("s,sa,sa->", ev.d, ev.Q, sq / (scale**2)[:, None])
        den = float(np.sum(ev.d * ev.V))
        w_next[m] = 0.5 * np.log(num / den)
    return w_next


def em_step_gibbs(mdp, policy, w_anchor, tol=1e-13, max_iter=100):
    """M-step for a Gibbs policy by Newton's method on the concave surrogate."""
    if not isinstance(policy, GibbsPolicy):
        raise TypeError("em_step_gibbs needs a GibbsPolicy")
    ev = evaluate(mdp, policy, w_anchor)
    weights = ev.d[:, None] * ev.Q * ev.pi  # p_gamma(s,a) Q(s,a)
    phi = policy.features
    target = np.einsum("sa,san->n", weights, phi)
    mass = weights.sum(axis=1)
    w = np.array(w_anchor, dtype=float)
    for _ in range(max_iter):
        p = policy.probs(w)
        mean = np.einsum("sa,san->sn", p, phi)
        grad = target - mass @ mean
        psi = phi - mean[:, None, :]
        cov = np.einsum("s,sa,sai,saj->ij", mass, p, psi, psi)
        step = solve_symmetric(symmetrize(cov), grad, 0.0)
        w = w + step
        if np.linalg.norm(step) <= tol * (1.0 + np.linalg.norm(w)):
            break
    return w


@dataclass
class LineSearchResult:
    w: np.ndarray
    step: float
    accepted: bool
    value: float
    candidates: list = field(default_factory=list)


def two_point_line_search(evaluate_fn, w, d, alpha, base_value=None):
    """Take ``w + alpha d`` unless the estimated return drops, then revert."""
    w = np.asarray(w, dtype=float)
    d = np.asarray(d, dtype=float)
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if not np.any(d):
        v = evaluate_fn(w) if base_value is None else base_value
        return LineSearchResult(w.copy(), 0.0, False, v)
    base = evaluate_fn(w) if base_value is None else base_value
    cand = w + alpha * d
    value = evaluate_fn(cand)
    if value >= base:
        return LineSearchResult(cand, alpha, True, value)
    return LineSearchResult(w.copy(), 0.0, False, base)


def grid_line_search(evaluate_fn, w, d, steps=PAPER_STEP_GRID):
    """Best step from ``steps`` along ``d``; ties go to the smallest step.

    ``evaluate_fn(w)`` must use common random numbers across calls.
    """
    w = np.asarray(w, dtype=float)
    steps = sorted(steps)
    values = [float(evaluate_fn(w + s * np.asarray(d))) for s in steps]
    best = int(np.argmax(values))  # argmax returns the first maximum
    return LineSearchResult(w + steps[best] * d, steps[best], True, values[best], list(zip(steps, values)))


TRACE_FIELDS = ("iteration", "return", "grad_norm", "step_size", "direction_norm", "h12_norm", "a1_norm", "wall_ms", "seed")


@dataclass
class RunTrace:
    rows: list = field(default_factory=list)
    iterates: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)


class ExactProblem:
    """Tabular MDP with exact gradients and curvature."""

    exact = True

    def __init__(self, mdp, policy):
        self.mdp = mdp
        self.policy = policy

    def curvature(self, w, rng=None):
        return hessian_decomposition(self.mdp, self.policy, w)

    def value(self, w, rng=None):
        return evaluate(self.mdp, self.policy, w).value

    def h2_operator(self, w, rule, curv):
        if rule.cg_mode == "fd_mvp":
            return fd_h2_operator(self.policy, w, exact_h2_weights(self.mdp, self.policy, w), rule.fd_epsilon)
        return LinearOperator.from_matrix(-symmetrize(curv.H2))

    def em_step(self, w):
        if isinstance(self.policy, GaussianLinearPolicy):
            return em_step_gaussian(self.mdp, self.policy, w)
        return em_step_gibbs(self.mdp, self.policy, w)


def _direction(problem, rule, curv, w):
    custom = getattr(problem, "direction", None)
    if custom is not None:
        return custom(rule, curv, w), None
    if rule.kind == "em":
        if not hasattr(problem, "em_step"):
            raise ValueError("EM updates need a problem with an M-step")
        return problem.em_step(w) - w, 1.0
    if rule.kind == "cg_gn_2":
        g = np.asarray(curv.grad)
        if not np.any(g):
            return np.zeros_like(g), None
        op = problem.h2_operator(w, rule, curv)
        return cg_gauss_newton_direction(g, op, rule.cg_iterations).direction, None
    return compute_direction(rule, curv), None


def run_policy_search(problem, w0, rule, schedule, iterations, seed=0, diagnostics=False,
                      grad_tol=1e-8, timing=False, callback=None):
    """Generic ascent ``w <- w + alpha d`` with a trace row per iteration.

    Row 0 records the initial evaluation. Sampled problems draw all
    randomness from streams derived from ``seed``, so runs are repeatable.
    ``wall_ms`` is only measured when ``timing`` is set; otherwise it is 0
    so that outputs are byte-identical across runs.
    """
    w = np.array(w0, dtype=float)
    root = np.random.SeedSequence(seed)
    streams = root.spawn(iterations + 1)
    trace = RunTrace()

    def record(t, value, g, step, d, curv, started):
        h12 = a1 = float("nan")
        if diagnostics and hasattr(curv, "A1") and hasattr(curv, "H12"):
            h12 = float(np.linalg.norm(curv.H12 + curv.H12.T, 2))
            a1 = float(np.linalg.norm(curv.A1, 2))
        trace.rows.append({
            "iteration": t, "return": float(value), "grad_norm": float(np.linalg.norm(g)),
            "step_size": float(step), "direction_norm": float(np.linalg.norm(d)),
            "h12_norm": h12, "a1_norm": a1,
            "wall_ms": (time.perf_counter() - started) * 1e3 if timing else 0.0, "seed": seed,
        })
        trace.iterates.append(w.copy())

    started = time.perf_counter()
    rng = np.random.default_rng(streams[0])
    curv = problem.curvature(w, rng)
    record(0, _value_of(problem, curv, w, rng), curv.grad, 0.0, np.zeros_like(w), curv, started)
    for t in range(1, iterations + 1):
        started = time.perf_counter()
        g = np.asarray(curv.grad)
        if problem.exact and np.linalg.norm(g) <= grad_tol:
            break
        try:
            d, forced = _direction(problem, rule, curv, w)
        except NumericalFailure as exc:
            exc.iteration = t
            exc.args = (f"iteration {t}: {exc}",)
            raise
        if not np.all(np.isfinite(d)):
            raise NumericalFailure(f"iteration {t}: non-finite search direction")
        rng = np.random.default_rng(streams[t])
        step = forced if forced is not None else schedule.base_step(t - 1)
        if schedule.normalize and np.any(d):
            d = d / np.linalg.norm(d)
        if forced is None and schedule.kind == "two_point" and getattr(problem, "lagged_line_search", False):
            # the batch drawn at the candidate doubles as its return estimate
            cand = w + step * d
            cand_curv = problem.curvature(cand, rng)
            if _value_of(problem, cand_curv, cand, rng) >= _value_of(problem, curv, w, rng):
                w, curv = cand, cand_curv
            else:
                step = 0.0
            record(t, _value_of(problem, curv, w, rng), curv.grad, step, d, curv, started)
            if callback is not None:
                callback(t, w, curv)
            continue
        if forced is None and schedule.kind == "two_point":
            res = two_point_line_search(lambda x: problem.value(x, _child(streams[t])), w, d, step)
            w, step = res.w, res.step
        elif forced is None and schedule.kind == "grid":
            if np.any(d):
                d = d / np.linalg.norm(d)
                res = grid_line_search(lambda x: problem.value(x, _child(streams[t])), w, d, schedule.steps)
                w, step = res.w, res.step
            else:
                step = 0.0
        else:
            w = w + step * d
        curv = problem.curvature(w, rng)
        record(t, _value_of(problem, curv, w, rng), curv.grad, step, d, curv, started)
        if callback is not None:
            callback(t, w, curv)
    return w, trace


def _child(seq):
    # same derived stream every time: common random numbers across candidates
    return np.random.default_rng(np.random.SeedSequence(seq.entropy, spawn_key=seq.spawn_key + (7,)))


def _value_of(problem, curv, w, rng):
    v = getattr(curv, "value", None)
    if v is None:
        v = problem.value(w, rng)
    return v
