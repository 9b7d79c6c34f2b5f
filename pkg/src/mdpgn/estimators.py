"""Sampling-based estimates of the gradient, the H2 preconditioner and the Fisher matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .linalg import solve_symmetric, symmetrize
from .mdp import Trajectory
from .policies import GaussianLinearPolicy, GibbsPolicy


@dataclass
class EstimateBundle:
    grad_hat: np.ndarray
    h2_hat: np.ndarray
    h2_diag_hat: np.ndarray
    fisher_hat: np.ndarray
    sample_count: int
    grad_se: np.ndarray | None = None
    h2_se: np.ndarray | None = None
    baseline: float = 0.0  # hook for a constant baseline; unused by default


@dataclass
class CriticFit:
    theta: np.ndarray
    ridge: float
    residual: float
    escalations: int = 0


def step_derivatives(policy, w, states, actions):
    """Per-step scores ``[..., n]`` and log-policy Hessians ``[..., n, n]``.

    ``states``/``actions`` are integer arrays for Gibbs policies; for a
    Gaussian-linear policy ``actions`` are the continuous draws.
    """
    states = np.asarray(states)
    actions = np.asarray(actions)
    if isinstance(policy, GibbsPolicy):
        return policy.scores(w)[states, actions], policy.log_hessians(w)[states]
    if isinstance(policy, GaussianLinearPolicy):
        shape = states.shape
        Phi = policy.phi(states.reshape(-1))
        Phi = np.reshape(Phi, (-1, policy.num_features))
        a = actions.reshape(-1).astype(float)
        n = policy.dim
        psi = policy.score_batch(w, Phi, a).reshape(shape + (n,))
        hess = policy.hess_batch(w, Phi, a).reshape(shape + (n, n))
        return psi, hess
    flat_s = states.reshape(-1).tolist()
    flat_a = actions.reshape(-1).tolist()
    psi = np.array([policy.grad_log_policy(w, s, a) for s, a in zip(flat_s, flat_a)])
    hess = np.array([policy.hess_log_policy(w, s, a) for s, a in zip(flat_s, flat_a)])
    n = policy.dim
    return psi.reshape(states.shape + (n,)), hess.reshape(states.shape + (n, n))


def _per_trajectory_terms(psi, hess, rewards, gamma):
    """Per-trajectory sums for batched arrays ``[N, T, ...]``."""
    disc = gamma ** np.arange(rewards.shape[1])
    weights = rewards * disc  # gamma^t R_t
    c1 = np.cumsum(psi, axis=1)
    c2 = np.cumsum(hess, axis=1)
    g = np.einsum("nt,nti->ni", weights, c1)
    h = np.einsum("nt,ntij->nij", weights, c2)
    f = np.einsum("t,nti,ntj->nij", disc, psi, psi)
    return g, h, f


def likelihood_ratio_estimates(trajectories, policy, w, gamma):
    """Likelihood-ratio estimates from complete rollouts.

    ``trajectories`` is a list of :class:`Trajectory` or a tuple of equal-length
    arrays ``(states, actions, rewards)`` each ``[N, T]``. The gradient sums
    ``gamma^t R_t`` times the running score sum; H2 does the same with the
    running log-policy Hessian; the Fisher estimate sums ``gamma^t psi psi^T``.
    """
    if isinstance(trajectories, tuple):
        S, A, R = (np.asarray(x) for x in trajectories)
        if S.size == 0:
            raise ValueError("no trajectories given")
        psi, hess = step_derivatives(policy, w, S, A)
        g, h, f = _per_trajectory_terms(psi, hess, R.astype(float), gamma)
    else:
        trajectories = list(trajectories)
        if not trajectories:
            raise ValueError("no trajectories given")
        parts = []
        for tr in trajectories:
            psi, hess = step_derivatives(policy, w, tr.states[None], tr.actions[None])
            parts.append(_per_trajectory_terms(psi, hess, np.asarray(tr.rewards, dtype=float)[None], gamma))
        g, h, f = (np.concatenate(x) for x in zip(*parts))
    N = len(g)
    h2 = symmetrize(h.mean(axis=0))
    se = (lambda x: x.std(axis=0, ddof=1) / np.sqrt(N)) if N > 1 else (lambda x: np.full(x.shape[1:], np.inf))
    return EstimateBundle(
        grad_hat=g.mean(axis=0), h2_hat=h2, h2_diag_hat=np.diag(h2).copy(),
        fisher_hat=symmetrize(f.mean(axis=0)), sample_count=N,
        grad_se=se(g), h2_se=se(h),
    )


def q_weighted_estimates(psi, hess, q, discounts, episodes):
    """Estimates from per-step scores weighted by Q estimates.

    ``psi [N, n]``, ``hess [N, n, n]``, ``q [N]`` and ``discounts [N]``
    (``gamma^t``) for steps pooled from ``episodes`` rollouts:
    ``grad = sum gamma^t psi Q / episodes`` and likewise for H2 and Fisher.
    """
    psi = np.asarray(psi, dtype=float)
    k = np.asarray(discounts, dtype=float)
    wq = k * np.asarray(q, dtype=float)
    g = psi.T @ wq / episodes
    h2 = symmetrize(np.einsum("t,tij->ij", wq, hess) / episodes)
    fisher = symmetrize((psi * k[:, None]).T @ psi / episodes)
    return EstimateBundle(g, h2, np.diag(h2).copy(), fisher, int(episodes))


@dataclass
class RecurrentEstimate:
    delta1: np.ndarray
    delta2: np.ndarray
    visits: int
    steps: int

    @property
    def recurrent_state_missed(self):
        return self.visits == 0


def recurrent_state_estimates(mdp, policy, w, num_steps, recurrent_state, seed=0, start_state=None):
    """Eligibility-trace estimates of the average-reward gradient and H2.

    Per step: sample the action, then add its score and log-Hessian to the
    traces (or reset both if the state is the recurrent one), then add
    ``R * trace`` to the accumulators, then transition. The raw sums are
    returned; they estimate the targets up to a positive factor.
    """
    if not isinstance(policy, GibbsPolicy):
        raise TypeError("recurrent_state_estimates needs a policy with tabular scores")
    sstar = int(recurrent_state)
    if not 0 <= sstar < mdp.num_states:
        raise ValueError("recurrent state out of range")
    pi = policy.policy_matrix(w)
    P_cum = np.ascontiguousarray(np.cumsum(mdp.transition, axis=2))
    pi_cum = np.ascontiguousarray(np.cumsum(pi, axis=1))
    scores = np.ascontiguousarray(policy.scores(w))
    hs = policy.log_hessians(w)
    hess = np.ascontiguousarray(np.broadcast_to(hs[:, None], scores.shape + (scores.shape[-1],)))
    s0 = sstar if start_state is None else int(start_state)
    d1, d2, visits = kernels.recurrent_chain(
        P_cum, np.ascontiguousarray(mdp.reward, dtype=float), pi_cum, scores, hess,
        sstar, int(num_steps), s0, int(seed) & 0xFFFFFFFFFFFFFFFF,
    )
    return RecurrentEstimate(np.asarray(d1), np.asarray(d2), int(visits), int(num_steps))


def compatible_critic_fit(scores, targets, ridge=0.0):
    """Least squares ``min |Psi theta - y|^2 + ridge |theta|^2`` on compatible features.

    A rank-deficient design gets an automatically escalated ridge, reported
    in the result.
    """
    Psi = np.asarray(scores, dtype=float)
    y = np.asarray(targets, dtype=float)
    if Psi.ndim != 2 or len(Psi) != len(y):
        raise ValueError("scores must be [N, n] with one target per row")
    M = symmetrize(Psi.T @ Psi)
    theta, info = solve_symmetric(M, Psi.T @ y, ridge, full_output=True)
    resid = float(np.sqrt(np.mean((Psi @ theta - y) ** 2))) if len(y) else 0.0
    return CriticFit(theta, info.ridge, resid, info.escalations)


def validated_critic_fit(scores, targets, groups, ridge_grid=(0.0, 1e-6, 1e-4, 1e-2, 1.0, 100.0), holdout=None):
    """Pick the ridge by held-out error, then refit on everything.

    ``groups`` labels each row with its rollout; the last group (or
    ``holdout``) is held out so correlated steps do not leak.
    """
    scores = np.asarray(scores, dtype=float)
    targets = np.asarray(targets, dtype=float)
    groups = np.asarray(groups)
    held = groups.max() if holdout is None else holdout
    train = groups != held
    best, best_err = ridge_grid[0], np.inf
    if train.any() and (~train).any():
        for lam in ridge_grid:
            fit = compatible_critic_fit(scores[train], targets[train], lam)
            err = float(np.mean((scores[~train] @ fit.theta - targets[~train]) ** 2))
            if err < best_err:
                best, best_err = lam, err
    return compatible_critic_fit(scores, targets, best)


def trajectories_from_arrays(states, actions, rewards):
    """Split ``[N, T]`` arrays into a list of :class:`Trajectory`."""
    return [Trajectory(np.asarray(s), np.asarray(a), np.asarray(r, dtype=float), np.asarray(a))
            for s, a, r in zip(states, actions, rewards)]
