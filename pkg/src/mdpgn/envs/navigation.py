"""Two-dimensional non-linear navigation task with a parameter-noise linear controller."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cartpole import SampledCurvature


@dataclass(frozen=True)
class NavigationParams:
    noise: float = 0.02
    start: tuple = (0.0, 1.0)
    start_noise: float = 0.001
    target: tuple = (0.0, 0.0)
    horizon: int = 80
    reward_width: float = 1.0
    discount: float = 1.0


def logistic(u):
    # stable for large |u|
    return np.where(u >= 0, 1.0 / (1.0 + np.exp(-np.abs(u))), np.exp(-np.abs(u)) / (1.0 + np.exp(-np.abs(u))))


def navigation_reward(state, params=NavigationParams()):
    diff = np.asarray(state, dtype=float) - np.asarray(params.target)
    return np.exp(-0.5 * np.sum(diff * diff, axis=-1) / params.reward_width**2)


def navigation_step(state, u, rng=None, params=NavigationParams()):
    """One transition for a state ``(s1, s2)`` or a batch ``[N, 2]``.

    Each equation gets its own Gaussian disturbance (skipped when ``rng`` is
    None). The reward is that of the current state.
    """
    state = np.asarray(state, dtype=float)
    s1, s2 = state[..., 0], state[..., 1]
    u = np.asarray(u, dtype=float)
    k1 = k2 = 0.0
    if rng is not None:
        k1 = params.noise * rng.standard_normal(np.shape(s1))
        k2 = params.noise * rng.standard_normal(np.shape(s1))
    n1 = s1 + logistic(u) - 0.5 + k1
    n2 = s2 - 0.1 * n1 + k2
    return np.stack([n1, n2], axis=-1), navigation_reward(state, params)


def navigation_start(count, rng, params=NavigationParams()):
    s = np.tile(np.asarray(params.start, dtype=float), (count, 1))
    if rng is not None:
        s = s + params.start_noise * rng.standard_normal(s.shape)
    return s


def navigation_policy(sigma=1.0):
    """``a = (w + eps).s`` with ``eps ~ N(0, sigma^2 I)``; features are the state."""
    from ..policies import GaussianLinearPolicy

    return GaussianLinearPolicy(lambda s: np.asarray(s, dtype=float), sigma, noise="parameter", num_features=2)


class NavigationProblem:
    """Sampled problem: ``episodes`` rollouts, Monte-Carlo reward-to-go as Q."""

    exact = False

    def __init__(self, policy, params=NavigationParams(), episodes=50):
        self.policy = policy
        self.params = params
        self.episodes = episodes

    def simulate(self, w, rng, count=None):
        p, pol = self.params, self.policy
        count = self.episodes if count is None else count
        H = p.horizon
        s = navigation_start(count, rng, p)
        S = np.empty((count, H, 2))
        A = np.empty((count, H))
        R = np.empty((count, H))
        for t in range(H):
            a = pol.sample_batch(w, s, rng)
            S[:, t], A[:, t] = s, a
            s, R[:, t] = navigation_step(s, a, rng, p)
        return S, A, R

    def value(self, w, rng):
        _, _, R = self.simulate(w, rng)
        disc = self.params.discount ** np.arange(self.params.horizon)
        return float((R @ disc).mean())

    def curvature(self, w, rng):
        S, A, R = self.simulate(w, rng)
        H = self.params.horizon
        disc = self.params.discount ** np.arange(H)
        wr = R * disc
        q = np.cumsum(wr[:, ::-1], axis=1)[:, ::-1]  # discounted reward-to-go from t
        Phi = S.reshape(-1, 2)
        a = A.reshape(-1)
        psi = self.policy.score_batch(w, Phi, a)
        hess = self.policy.hess_batch(w, Phi, a)
        qf = q.reshape(-1)
        n = self.episodes
        grad = psi.T @ qf / n
        H2 = np.einsum("t,tij->ij", qf, hess) / n
        k = np.tile(disc, n)
        fisher = (psi * k[:, None]).T @ psi / n
        return SampledCurvature(grad, 0.5 * (H2 + H2.T), 0.5 * (fisher + fisher.T), float((R @ disc).mean()))

