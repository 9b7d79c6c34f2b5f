"""Exact policy-gradient, Hessian and Fisher computations on tabular MDPs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import symmetrize
from .mdp import (
    advantages,
    bellman_solve,
    policy_transition,
    solve_state_values,
    state_action_values,
    state_occupancy,
)


@dataclass
class Evaluation:
    """Everything the exact calculus needs at one parameter vector."""

    mdp: object
    policy: object
    w: np.ndarray
    pi: np.ndarray
    P_pi: np.ndarray
    V: np.ndarray
    Q: np.ndarray
    A: np.ndarray
    d: np.ndarray
    moments: object

    @property
    def occupancy(self):
        return self.d[:, None] * self.pi

    @property
    def value(self):
        return float(self.mdp.start @ self.V)


def evaluate(mdp, policy, w):
    w = policy.check_params(w)
    mo = policy.action_moments(w)
    pi = mo.prob
    if pi.shape != (mdp.num_states, mdp.num_actions):
        raise ValueError(f"policy covers {pi.shape}, MDP is {(mdp.num_states, mdp.num_actions)}")
    V = solve_state_values(mdp, pi)
    Q = state_action_values(mdp, pi, V)
    return Evaluation(
        mdp, policy, w, pi, policy_transition(mdp, pi), V, Q, advantages(Q, V, pi),
        state_occupancy(mdp, pi), mo,
    )


def _as_eval(mdp, policy, w):
    if isinstance(mdp, Evaluation):
        return mdp
    return evaluate(mdp, policy, w)


def expected_return_at(mdp, policy, w):
    return _as_eval(mdp, policy, w).value


def policy_gradient_exact(mdp, policy=None, w=None):
    ev = _as_eval(mdp, policy, w)
    return np.einsum("s,sa,san->n", ev.d, ev.Q, ev.moments.score)


def value_gradients(mdp, policy=None, w=None):
    """Per-state value gradients ``[S, n]``.

    Solves ``(I - gamma P_pi) dV = b`` column by column with
    ``b(s) = sum_a Q(s,a) E[grad log pi ; a]``.
    """
    ev = _as_eval(mdp, policy, w)
    b = np.einsum("sa,san->sn", ev.Q, ev.moments.score)
    return bellman_solve(ev.mdp, ev.P_pi, b)


@dataclass
class HessianDecomposition:
    grad: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    H12: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    fisher: np.ndarray
    hessian: np.ndarray
    value: float = 0.0
    value_grads: np.ndarray | None = field(default=None, repr=False)

    @property
    def cross(self):
        return self.H12 + self.H12.T


def hessian_decomposition(mdp, policy=None, w=None):
    ev = _as_eval(mdp, policy, w)
    mo = ev.moments
    d = ev.d

    def weighted(table, weights):
        return symmetrize(np.einsum("s,sa,saij->ij", d, weights, table))

    Vb = np.broadcast_to(ev.V[:, None], ev.Q.shape)
    H1 = weighted(mo.outer, ev.Q)
    H2 = weighted(mo.hess, ev.Q)
    A1 = weighted(mo.outer, ev.A)
    A2 = weighted(mo.hess, ev.A)
    V1 = weighted(mo.outer, Vb)
    V2 = weighted(mo.hess, Vb)
    dV = value_gradients(ev)
    # expected next-state value gradient for each (s, a)
    next_dV = np.einsum("sat,tn->san", ev.mdp.transition, dV)
    H12 = ev.mdp.discount * np.einsum("s,sai,saj->ij", d, mo.score, next_dV)
    fisher = symmetrize(np.einsum("s,saij->ij", d, mo.outer))
    grad = np.einsum("s,sa,san->n", d, ev.Q, mo.score)
    hessian = symmetrize(H1 + H2 + H12 + H12.T)
    return HessianDecomposition(grad, H1, H2, H12, A1, A2, V1, V2, fisher, hessian, ev.value, dV)


def fisher_information(mdp, policy=None, w=None):
    """Both forms of the Fisher matrix: score outer products and negated log-Hessian."""
    ev = _as_eval(mdp, policy, w)
    G_outer = symmetrize(np.einsum("s,saij->ij", ev.d, ev.moments.outer))
    G_curv = -symmetrize(np.einsum("s,saij->ij", ev.d, ev.moments.hess))
    return G_outer, G_curv


def em_surrogate_value(mdp, policy, w_eval, w_anchor):
    """``sum p_gamma(s,a; w_anchor) Q(s,a; w_anchor) log pi(a|s; w_eval)``."""
    ev = evaluate(mdp, policy, w_anchor)
    elp = policy.expected_log_prob(policy.check_params(w_eval), ev.w)
    return float(np.einsum("s,sa,sa->", ev.d, ev.Q, elp))


@dataclass
class ConsistencyReport:
    consistent_at_w: bool
    witnesses: list
    zero_gradient_violations: list
    threshold: float


def check_value_consistency(mdp, policy=None, w=None, tol=None):
    """Pointwise check of the sign conditions on per-state value gradients.

    A witness ``(i, s, s_hat)`` has coordinate ``i`` of the value gradient
    strictly positive at ``s_hat`` and strictly negative at ``s``.
    ``zero_gradient_violations`` lists ``(i, s, a)`` where the value
    gradient vanishes but ``d pi(a|s) / d w_i`` does not.
    """
    ev = _as_eval(mdp, policy, w)
    dV = value_gradients(ev)
    scale = float(np.max(np.abs(dV), initial=0.0))
    thr = 1e-8 * scale if tol is None else float(tol)
    sign = np.where(dV > thr, 1, np.where(dV < -thr, -1, 0))
    witnesses = []
    for i in range(dV.shape[1]):
        pos = np.flatnonzero(sign[:, i] > 0)
        neg = np.flatnonzero(sign[:, i] < 0)
        witnesses.extend((i, int(s), int(sh)) for sh in pos for s in neg)
    # d pi(a|s)/dw = E[grad log pi ; a]
    dpi = ev.moments.score
    pi_scale = float(np.max(np.abs(dpi), initial=0.0))
    pi_thr = 1e-8 * pi_scale if tol is None else float(tol)
    violations = []
    for s, i in zip(*np.nonzero(sign == 0)):
        for a in np.flatnonzero(np.abs(dpi[s, :, i]) > pi_thr):
            violations.append((int(i), int(s), int(a)))
    return ConsistencyReport(not witnesses and not violations, witnesses, violations, thr)


def fd_derivative_oracle(f, w, order=1, h=None, richardson=False):
    """Central finite differences of a scalar function ``f``.

    ``order=1`` returns the gradient (default step 1e-5); ``order=2`` the
    symmetrized Hessian (default step 1e-4). ``richardson`` combines steps
    ``h`` and ``h/2`` to cancel the leading truncation term, which allows a
    larger ``h`` and so less roundoff.
    """
    if richardson:
        coarse = fd_derivative_oracle(f, w, order, h)
        h0 = (1e-5 if order == 1 else 1e-4) if h is None else h
        fine = fd_derivative_oracle(f, w, order, h0 / 2)
        return (4 * fine - coarse) / 3
    w = np.asarray(w, dtype=float)
    n = w.size
    E = np.eye(n)

    def call(x):
        v = float(f(x))
        if not np.isfinite(v):
            raise ValueError("function returned a non-finite value")
        return v

    if order == 1:
        h = 1e-5 if h is None else h
        return np.array([(call(w + h * E[i]) - call(w - h * E[i])) / (2 * h) for i in range(n)])
    if order == 2:
        h = 1e-4 if h is None else h
        H = np.empty((n, n))
        f0 = call(w)
        for i in range(n):
            H[i, i] = (call(w + h * E[i]) - 2 * f0 + call(w - h * E[i])) / h**2
            for j in range(i):
                pp = call(w + h * (E[i] + E[j]))
                pm = call(w + h * (E[i] - E[j]))
                mp = call(w - h * (E[i] - E[j]))
                mm = call(w - h * (E[i] + E[j]))
                H[i, j] = H[j, i] = (pp - pm - mp + mm) / (4 * h * h)
        return symmetrize(H)
    raise ValueError("order must be 1 or 2")
