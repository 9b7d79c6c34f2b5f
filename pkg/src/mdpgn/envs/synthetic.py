"""Small constructed instances used by the invariance and estimator checks."""

from __future__ import annotations

import numpy as np

from ..mdp import TabularMdp
from ..policies import GibbsPolicy


def regenerative_mdp(rng, num_states=3, num_actions=3, num_params=3, return_prob=0.3):
    """Ergodic MDP whose state 0 is a regeneration point.

    Every action in a state other than 0 returns there with the same
    probability, so the return time does not depend on the policy, and all
    actions in state 0 share one feature vector so its score is zero.
    """
    S, A = num_states, num_actions
    P = np.zeros((S, A, S))
    P[0, :, 1:] = rng.dirichlet(np.ones(S - 1), size=A)
    for s in range(1, S):
        P[s, :, 0] = return_prob
        P[s, :, 1:] = (1 - return_prob) * rng.dirichlet(np.ones(S - 1), size=A)
    R = rng.uniform(0.0, 1.0, size=(S, A))
    feats = rng.normal(size=(S, A, num_params))
    feats[0] = feats[0, 0]
    mdp = TabularMdp(P, R, np.eye(S)[0], 0.99)
    return mdp, GibbsPolicy(feats)


def stationary_distribution(P_pi):
    vals, vecs = np.linalg.eig(P_pi.T)
    k = int(np.argmin(np.abs(vals - 1.0)))
    mu = np.real(vecs[:, k])
    return mu / mu.sum()


def average_reward_oracle(mdp, policy, w, recurrent_state=0):
    """Stationary-distribution oracle for the average-reward gradient and H2.

    Action values are rewards-to-go until the chain next enters the
    recurrent state, the normalization the trace estimator targets.
    Returns ``(eta, grad, H2)``.
    """
    pi = policy.policy_matrix(w)
    P = mdp.transition
    S, A = pi.shape
    P_pi = np.einsum("sa,sat->st", pi, P)
    mu = stationary_distribution(P_pi)
    r_pi = np.sum(pi * mdp.reward, axis=1)
    eta = float(mu @ r_pi)
    keep = np.ones(S, bool)
    keep[recurrent_state] = False
    # W(s) = r_pi(s) + sum_{s' != s*} P_pi(s, s') W(s')
    M = np.eye(S) - P_pi * keep[None, :]
    V = np.linalg.solve(M, r_pi)
    Q = mdp.reward + np.einsum("sat,t->sa", P, V * keep)
    psi = policy.scores(w)
    hs = policy.log_hessians(w)
    grad = np.einsum("s,sa,san,sa->n", mu, pi, psi, Q)
    H2 = np.einsum("s,sa,sa,sij->ij", mu, pi, Q, hs)
    return eta, grad, 0.5 * (H2 + H2.T)
