"""Cart-pole swing-up with continuous force and RBF-feature Gaussian control."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CartPoleParams:
    gravity: float = 9.8
    pole_mass: float = 2.0
    cart_mass: float = 8.0
    length: float = 0.5
    dt: float = 0.1
    force_limit: float = 50.0
    noise: float = 10.0
    discount: float = 0.99
    horizon: int = 100
    start: tuple = (np.pi, 0.0)

    @property
    def alpha(self):
        return 1.0 / (self.pole_mass + self.cart_mass)


def wrap_angle(theta):
    """Map to (-pi, pi]."""
    out = np.mod(theta + np.pi, 2 * np.pi) - np.pi
    return np.where(out == -np.pi, np.pi, out)


def angular_acceleration(theta, theta_dot, u, p=CartPoleParams()):
    a, m, l = p.alpha, p.pole_mass, p.length
    num = p.gravity * np.sin(theta) - a * m * l * theta_dot**2 * np.sin(2 * theta) / 2 - a * np.cos(theta) * u
    return num / (4 * l / 3 - a * m * l * np.cos(theta) ** 2)


def cartpole_reward(theta):
    return (1.0 + np.cos(theta)) / 2.0


def cartpole_step(state, u, rng=None, params=CartPoleParams()):
    """One Euler step for a state ``(theta, theta_dot)`` or a batch ``[N, 2]``.

    Uniform noise on ``[-noise, noise]`` is added to ``u`` before clipping
    (skipped when ``rng`` is None). The reward is that of the current state.
    """
    state = np.asarray(state, dtype=float)
    theta, theta_dot = state[..., 0], state[..., 1]
    u = np.asarray(u, dtype=float)
    if rng is not None:
        u = u + rng.uniform(-params.noise, params.noise, size=np.shape(theta))
    u = np.clip(u, -params.force_limit, params.force_limit)
    acc = angular_acceleration(theta, theta_dot, u, params)
    nxt = np.stack([wrap_angle(theta + params.dt * theta_dot), theta_dot + params.dt * acc], axis=-1)
    return nxt, cartpole_reward(theta)


class RbfFeatures:
    """``phi_i(s) = exp(-1/2 (c_i - s)^T Lam (c_i - s))``.

    The sign in the exponent is negative so features are bounded bumps.
    """

    def __init__(self, centers, bandwidth):
        self.centers = np.asarray(centers, dtype=float)
        self.bandwidth = np.asarray(bandwidth, dtype=float)

    @classmethod
    def random(cls, rng, count=100, low=(-np.pi, -4 * np.pi), high=(np.pi, 4 * np.pi), bandwidth=(1.0, 0.25)):
        centers = rng.uniform(low, high, size=(count, 2))
        return cls(centers, np.diag(bandwidth))

    @property
    def dim(self):
        return len(self.centers)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        diff = self.centers - s[..., None, :]
        q = np.einsum("...ki,ij,...kj->...k", diff, self.bandwidth, diff)
        return np.exp(-0.5 * q)


@dataclass
class EpisodeBatch:
    """Arrays ``[episodes, steps]`` (features ``[episodes, steps, m]``)."""

    states: np.ndarray
    features: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray


def simulate_cartpole(policy, w, episodes, steps, rng, params=CartPoleParams()):
    """Run ``episodes`` episodes in parallel from the start state."""
    s = np.tile(np.asarray(params.start, dtype=float), (episodes, 1))
    S = np.empty((episodes, steps, 2))
    F = np.empty((episodes, steps, policy.num_features))
    A = np.empty((episodes, steps))
    R = np.empty((episodes, steps))
    for t in range(steps):
        phi = policy.phi(s)
        a = policy.sample_batch(w, phi, rng)
        S[:, t], F[:, t], A[:, t] = s, phi, a
        s, R[:, t] = cartpole_step(s, a, rng, params)
    return EpisodeBatch(S, F, A, R)


def discounted_return(rewards, gamma, horizon):
    disc = gamma ** np.arange(horizon)
    return rewards[..., :horizon] @ disc


def monte_carlo_targets(rewards, gamma, horizon):
    """``sum_{tau<H} gamma^tau R_{t+tau}`` for each ``t < len - H + 1``."""
    T = rewards.shape[-1]
    disc = gamma ** np.arange(horizon)
    starts = T - horizon + 1
    out = np.empty(rewards.shape[:-1] + (starts,))
    for t in range(starts):
        out[..., t] = rewards[..., t:t + horizon] @ disc
    return out


@dataclass
class SampledCurvature:
    """Sampled quantities at one parameter point."""

    grad: np.ndarray
    H2: np.ndarray
    fisher: np.ndarray
    value: float
    theta: np.ndarray | None = None


class CartPoleProblem:
    """Sampled policy-search problem with the swing-up protocol.

    Each evaluation simulates ``episodes`` rollouts of length ``2H``. Rollouts
    in the second half of the batch fit the compatible critic on Monte-Carlo
    ``H``-step targets; the first half supplies the gradient (with the critic
    as Q estimate) and the preconditioners. H2 is weighted with the
    Monte-Carlo targets, which are non-negative, so ``-H2`` stays PSD.
    Preconditioned directions come from steepest descent warm-started at the
    gradient and capped at ``solver_iterations``.
    """

    exact = False
    lagged_line_search = True

    def __init__(self, policy, params=CartPoleParams(), episodes=10, critic_episodes=5,
                 gradient="critic", solver="steepest_descent", solver_iterations=250,
                 ridge_grid=(0.0, 1e-4, 1e-2, 1.0, 100.0)):
        if gradient not in ("critic", "monte_carlo"):
            raise ValueError("gradient must be 'critic' or 'monte_carlo'")
        if solver not in ("steepest_descent", "direct"):
            raise ValueError("solver must be 'steepest_descent' or 'direct'")
        if not 0 < critic_episodes < episodes:
            raise ValueError("critic_episodes must leave episodes for the gradient")
        self.policy = policy
        self.params = params
        self.episodes = episodes
        self.critic_episodes = critic_episodes
        self.gradient = gradient
        self.solver = solver
        self.solver_iterations = solver_iterations
        self.ridge_grid = ridge_grid

    def value(self, w, rng):
        H = self.params.horizon
        batch = simulate_cartpole(self.policy, w, self.episodes, H, rng, self.params)
        return float(discounted_return(batch.rewards, self.params.discount, H).mean())

    def curvature(self, w, rng):
        from ..estimators import validated_critic_fit

        p, pol = self.params, self.policy
        H, gamma = p.horizon, p.discount
        batch = simulate_cartpole(pol, w, self.episodes, 2 * H, rng, p)
        q_mc = monte_carlo_targets(batch.rewards, gamma, H)[:, :H]
        m = pol.num_features
        Phi = batch.features[:, :H].reshape(-1, m)
        psi = pol.score_batch(w, Phi, batch.actions[:, :H].reshape(-1)).reshape(self.episodes, H, -1)
        n_grad = self.episodes - self.critic_episodes
        crit = slice(n_grad, self.episodes)
        groups = np.repeat(np.arange(self.critic_episodes), H)
        fit = validated_critic_fit(psi[crit].reshape(-1, psi.shape[-1]), q_mc[crit].reshape(-1), groups, self.ridge_grid)
        disc = gamma ** np.arange(H)
        psi_g = psi[:n_grad]
        q_hat = psi_g @ fit.theta if self.gradient == "critic" else q_mc[:n_grad]
        grad = np.einsum("t,eti,et->i", disc, psi_g, q_hat) / n_grad
        fisher = np.einsum("t,eti,etj->ij", disc, psi_g, psi_g) / n_grad
        # log-policy Hessian is -phi phi^T / sigma^2 for the mean weights
        Phi_g = batch.features[:n_grad, :H]
        _, base_sigma = pol._split(w)
        wq = disc * q_mc[:n_grad]
        H2 = -np.einsum("et,eti,etj->ij", wq, Phi_g, Phi_g) / (n_grad * base_sigma**2)
        value = float(discounted_return(batch.rewards, gamma, H).mean())
        return SampledCurvature(grad, 0.5 * (H2 + H2.T), 0.5 * (fisher + fisher.T), value, fit.theta)

    def direction(self, rule, curv, w):
        from ..linalg import solve_symmetric, steepest_descent_solve

        g = curv.grad
        if rule.kind == "steepest":
            return g.copy()
        if rule.kind == "natural":
            M = curv.fisher
        elif rule.kind == "gauss_newton_2":
            M = -curv.H2
        else:
            raise ValueError(f"rule {rule.kind!r} is not supported on cart-pole")
        M = M + rule.ridge * np.eye(len(g))
        if self.solver == "direct":
            return solve_symmetric(M, g)
        return steepest_descent_solve(M, g, x0=g, max_iter=self.solver_iterations)


def cartpole_policy(rng, params=CartPoleParams(), num_centers=100, sigma=2.0):
    """Gaussian policy on random RBF features (means linear in the features)."""
    from ..policies import GaussianLinearPolicy

    feats = RbfFeatures.random(rng, num_centers)
    return GaussianLinearPolicy(feats, sigma, num_features=feats.dim)
