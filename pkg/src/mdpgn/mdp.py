"""Finite MDPs and exact dynamic-programming quantities."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import NumericalFailure

PROB_TOL = 1e-12


def _as_distribution(x, axis, what):
    x = np.array(x, dtype=float)
    if np.any(~np.isfinite(x)):
        raise ValueError(f"{what} has non-finite entries")
    if np.any(x < 0):
        raise ValueError(f"{what} has negative entries")
    sums = x.sum(axis=axis, keepdims=True)
    if np.any(np.abs(sums - 1.0) > PROB_TOL):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise ValueError(f"{what} does not sum to 1 (max deviation {worst:.3g})")
    return x / sums


@dataclass(frozen=True)
class TabularMdp:
    """Finite MDP ``(S, A, D, P, R)`` with discount ``gamma``.

    ``transition`` is indexed ``[s, a, s']``. Arrays are copied, validated
    and frozen on construction. ``terminal`` optionally flags absorbing
    states (self-loop, zero reward).
    """

    transition: np.ndarray
    reward: np.ndarray
    start: np.ndarray
    discount: float
    terminal: np.ndarray | None = None
    reward_max: float = field(init=False)

    def __post_init__(self):
        P = _as_distribution(self.transition, 2, "transition rows")
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must be [S, A, S], got {P.shape}")
        S, A, _ = P.shape
        R = np.array(self.reward, dtype=float)
        if R.shape != (S, A):
            raise ValueError(f"reward must be [{S}, {A}], got {R.shape}")
        if np.any(~np.isfinite(R)) or np.any(R < 0):
            raise ValueError("rewards must be finite and non-negative")
        D = _as_distribution(self.start, 0, "start distribution")
        if D.shape != (S,):
            raise ValueError(f"start must have length {S}")
        gamma = float(self.discount)
        if not 0.0 <= gamma < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {gamma}")
        term = np.zeros(S, dtype=bool) if self.terminal is None else np.array(self.terminal, dtype=bool)
        if term.shape != (S,):
            raise ValueError("terminal mask has wrong length")
        for s in np.flatnonzero(term):
            if not (np.allclose(P[s, :, s], 1.0) and np.all(R[s] == 0)):
                raise ValueError(f"terminal state {s} must self-loop with zero reward")
        for arr in (P, R, D, term):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "start", D)
        object.__setattr__(self, "discount", gamma)
        object.__setattr__(self, "terminal", term)
        object.__setattr__(self, "reward_max", float(R.max(initial=0.0)))

    @property
    def num_states(self):
        return self.transition.shape[0]

    @property
    def num_actions(self):
        return self.transition.shape[1]

    def with_reward(self, reward):
        return TabularMdp(self.transition, reward, self.start, self.discount, self.terminal)

    def to_dict(self):
        return {
            "states": self.num_states,
            "actions": self.num_actions,
            "gamma": self.discount,
            "start": self.start.tolist(),
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        expected = {"states", "actions", "gamma", "start", "transition", "reward"}
        keys = set(doc)
        if keys != expected:
            raise ValueError(f"mdp keys must be {sorted(expected)}, got {sorted(keys)}")
        mdp = cls(doc["transition"], doc["reward"], doc["start"], doc["gamma"])
        if mdp.num_states != doc["states"] or mdp.num_actions != doc["actions"]:
            raise ValueError("declared states/actions disagree with table shapes")
        return mdp

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def random_mdp(rng, num_states, num_actions, discount=0.9, reward_low=0.0, sparsity=0.0):
    """Random MDP with Dirichlet transitions, for tests and validation suites."""
    P = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    if sparsity > 0:
        mask = rng.random(P.shape) < sparsity
        mask[..., 0] = False
        P = np.where(mask, 0.0, P)
        P /= P.sum(axis=2, keepdims=True)
    R = reward_low + rng.random((num_states, num_actions))
    D = rng.dirichlet(np.ones(num_states))
    return TabularMdp(P, R, D, discount)


def _check_policy_matrix(mdp, pi):
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (mdp.num_states, mdp.num_actions):
        raise ValueError(f"policy matrix must be [{mdp.num_states}, {mdp.num_actions}], got {pi.shape}")
    if np.any(pi < -PROB_TOL) or np.any(np.abs(pi.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("policy rows must be probability distributions")
    return pi


def policy_transition(mdp, pi):
    """State-to-state kernel ``P_pi[s, s']``."""
    return np.einsum("sa,sat->st", pi, mdp.transition)


def _solve(A, B):
    try:
        X = scipy.linalg.solve(A, B, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"linear solve failed: {exc}") from exc
    if not np.all(np.isfinite(X)):
        raise NumericalFailure("linear solve produced non-finite values")
    return X


def bellman_solve(mdp, P_pi, rhs):
    """Solve ``(I - gamma P_pi) X = rhs`` for vector or matrix right-hand sides."""
    S = mdp.num_states
    return _solve(np.eye(S) - mdp.discount * P_pi, rhs)


def solve_state_values(mdp, pi):
    pi = _check_policy_matrix(mdp, pi)
    r_pi = np.sum(pi * mdp.reward, axis=1)
    return bellman_solve(mdp, policy_transition(mdp, pi), r_pi)


def state_action_values(mdp, pi, V):
    V = np.asarray(V, dtype=float)
    if V.shape != (mdp.num_states,):
        raise ValueError("V has the wrong length")
    return mdp.reward + mdp.discount * mdp.transition @ V


def advantages(Q, V, pi):
    Q = np.asarray(Q, dtype=float)
    V = np.asarray(V, dtype=float)
    if Q.shape != np.shape(pi) or Q.shape[0] != V.shape[0]:
        raise ValueError("Q, V and pi shapes disagree")
    return Q - V[:, None]


def state_occupancy(mdp, pi):
    """Discounted state marginal ``d`` solving ``d = D + gamma P_pi^T d``."""
    pi = _check_policy_matrix(mdp, pi)
    P_pi = policy_transition(mdp, pi)
    S = mdp.num_states
    return _solve(np.eye(S) - mdp.discount * P_pi.T, mdp.start)


def discounted_occupancy(mdp, pi):
    """Discounted state-action occupancy ``p_gamma[s, a] = d(s) pi(a|s)``."""
    pi = _check_policy_matrix(mdp, pi)
    return state_occupancy(mdp, pi)[:, None] * pi


def expected_return(mdp, pi):
    return float(np.sum(discounted_occupancy(mdp, pi) * mdp.reward))


@dataclass
class Trajectory:
    """States, actions and rewards of one rollout.

    ``actions`` holds what the policy emitted (indices or continuous values);
    ``action_indices`` holds the MDP action actually executed.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    action_indices: np.ndarray | None = None
    terminal: bool = False

    def __len__(self):
        return len(self.rewards)

    @property
    def steps(self):
        return list(zip(self.states.tolist(), self.actions.tolist(), self.rewards.tolist()))


def spawn_rngs(seed, count):
    """Independent generators derived from one 64-bit seed."""
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in seq.spawn(count)]


def sample_trajectory(mdp, policy, w, horizon, rng):
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    states, actions, idx, rewards = [], [], [], []
    s = int(rng.choice(mdp.num_states, p=mdp.start))
    terminal = False
    for _ in range(horizon):
        a = policy.sample_action(w, s, rng)
        ai = policy.action_index(a)
        states.append(s)
        actions.append(a)
        idx.append(ai)
        rewards.append(mdp.reward[s, ai])
        if mdp.terminal[s]:
            terminal = True
            break
        s = int(rng.choice(mdp.num_states, p=mdp.transition[s, ai]))
    return Trajectory(np.array(states), np.array(actions), np.array(rewards), np.array(idx), terminal)


def _categorical_rows(rng, probs):
    """One categorical draw per row of ``probs``."""
    u = rng.random(probs.shape[0])
    cdf = np.cumsum(probs, axis=1)
    out = (u[:, None] > cdf).sum(axis=1)
    return np.minimum(out, probs.shape[1] - 1)


def sample_tabular_batch(mdp, pi, horizon, count, rng):
    """Vectorized sampling of ``count`` trajectories for a discrete policy matrix.

    Returns ``(states, actions, rewards)`` arrays of shape ``[count, horizon]``.
    """
    pi = _check_policy_matrix(mdp, pi)
    S = np.empty((count, horizon), dtype=np.int64)
    A = np.empty((count, horizon), dtype=np.int64)
    s = _categorical_rows(rng, np.broadcast_to(mdp.start, (count, mdp.num_states)))
    for t in range(horizon):
        a = _categorical_rows(rng, pi[s])
        S[:, t] = s
        A[:, t] = a
        s = _categorical_rows(rng, mdp.transition[s, a])
    return S, A, mdp.reward[S, A]
