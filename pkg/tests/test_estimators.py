import numpy as np
import pytest

from mdpgn.calculus import hessian_decomposition
from mdpgn.envs.synthetic import average_reward_oracle, regenerative_mdp
from mdpgn.estimators import (
    compatible_critic_fit, likelihood_ratio_estimates, q_weighted_estimates, recurrent_state_estimates,
    step_derivatives, trajectories_from_arrays, validated_critic_fit,
)
from mdpgn.mdp import random_mdp, sample_tabular_batch
from mdpgn.policies import GaussianLinearPolicy, GibbsPolicy


def truncated_oracle(mdp, pol, w, H):
    """Exact H-step gradient, H2 and Fisher by forward marginals and backward k-step Q.

    grad = sum_t gamma^t sum_{s,a} p_t(s,a) psi(s,a) Q_{H-t}(s,a), likewise with the
    log-Hessian for H2, and Fisher = sum_t gamma^t E[psi psi^T].
    """
    pi = pol.probs(w)
    psi = pol.scores(w)
    hs = pol.log_hessians(w)
    P, R, g = mdp.transition, mdp.reward, mdp.discount
    S, A = pi.shape
    Qk = [np.zeros((S, A))]
    for _ in range(H):
        V = np.sum(pi * Qk[-1], axis=1)
        Qk.append(R + g * P @ V)
    grad = np.zeros(pol.dim)
    H2 = np.zeros((pol.dim, pol.dim))
    F = np.zeros((pol.dim, pol.dim))
    mu = mdp.start.copy()
    for t in range(H):
        p = mu[:, None] * pi
        q = Qk[H - t]
        grad += g**t * np.einsum("sa,san,sa->n", p, psi, q)
        H2 += g**t * np.einsum("sa,sij,sa->ij", p, hs, q)
        F += g**t * np.einsum("sa,sai,saj->ij", p, psi, psi)
        mu = np.einsum("sa,sat->t", p, P)
    return grad, H2, F


@pytest.fixture(scope="module")
def lr_setup():
    r = np.random.default_rng(11)
    mdp = random_mdp(r, 4, 3, 0.9)
    pol = GibbsPolicy(r.normal(size=(4, 3, 3)))
    w = r.normal(size=3)
    batch = sample_tabular_batch(mdp, pol.probs(w), 50, 10_000, r)
    return mdp, pol, w, batch


class TestLikelihoodRatio:
    def test_unbiased_for_truncated_objective(self, lr_setup):
        mdp, pol, w, batch = lr_setup
        est = likelihood_ratio_estimates(batch, pol, w, mdp.discount)
        g, H2, _ = truncated_oracle(mdp, pol, w, 50)
        assert np.all(np.abs(est.grad_hat - g) <= 4 * est.grad_se + 1e-12)
        assert np.all(np.abs(est.h2_hat - H2) <= 4 * est.h2_se + 1e-12)

    def test_fisher_close(self, lr_setup):
        mdp, pol, w, batch = lr_setup
        est = likelihood_ratio_estimates(batch, pol, w, mdp.discount)
        _, _, F = truncated_oracle(mdp, pol, w, 50)
        np.testing.assert_allclose(est.fisher_hat, F, rtol=0.05, atol=0.02 * np.max(np.abs(F)))

    def test_truncated_oracle_approaches_exact(self, lr_setup):
        mdp, pol, w, _ = lr_setup
        hd = hessian_decomposition(mdp, pol, w)
        g, H2, F = truncated_oracle(mdp, pol, w, 400)
        np.testing.assert_allclose(g, hd.grad, atol=1e-12)
        np.testing.assert_allclose(H2, hd.H2, atol=1e-12)
        np.testing.assert_allclose(F, hd.fisher, atol=1e-12)

    def test_list_input_matches_arrays(self, lr_setup):
        mdp, pol, w, (S, A, R) = lr_setup
        sub = (S[:20], A[:20], R[:20])
        a = likelihood_ratio_estimates(sub, pol, w, 0.9)
        b = likelihood_ratio_estimates(trajectories_from_arrays(*sub), pol, w, 0.9)
        np.testing.assert_allclose(a.h2_hat, b.h2_hat, rtol=1e-12)
        assert a.sample_count == 20

    def test_empty(self):
        with pytest.raises(ValueError):
            likelihood_ratio_estimates([], GibbsPolicy(np.ones((1, 1, 1))), np.zeros(1), 0.9)

    def test_gaussian_step_derivatives(self, rng):
        pol = GaussianLinearPolicy(rng.normal(size=(3, 2)), 0.5)
        w = rng.normal(size=2)
        S = np.array([[0, 2], [1, 1]])
        A = rng.normal(size=(2, 2))
        psi, hess = step_derivatives(pol, w, S, A)
        np.testing.assert_allclose(psi[1, 0], pol.grad_log_policy(w, 1, A[1, 0]))
        np.testing.assert_allclose(hess[0, 1], pol.hess_log_policy(w, 2, A[0, 1]))


class TestQWeighted:
    def test_formula(self, rng):
        psi = rng.normal(size=(6, 2))
        hess = -np.abs(rng.normal(size=(6, 2, 2)))
        q = rng.random(6)
        k = 0.9 ** np.arange(6)
        est = q_weighted_estimates(psi, hess, q, k, 2)
        np.testing.assert_allclose(est.grad_hat, sum(k[i] * q[i] * psi[i] for i in range(6)) / 2)
        np.testing.assert_allclose(est.fisher_hat, sum(k[i] * np.outer(psi[i], psi[i]) for i in range(6)) / 2)


class TestCritic:
    def test_matches_pinv(self, rng):
        Psi = rng.normal(size=(40, 4))
        y = rng.normal(size=40)
        fit = compatible_critic_fit(Psi, y)
        np.testing.assert_allclose(fit.theta, np.linalg.pinv(Psi) @ y, rtol=1e-10)
        assert fit.escalations == 0

    def test_exact_interpolation(self, rng):
        Psi = rng.normal(size=(10, 3))
        theta = np.array([1.0, -2.0, 0.5])
        fit = compatible_critic_fit(Psi, Psi @ theta)
        np.testing.assert_allclose(fit.theta, theta, rtol=1e-10)
        assert fit.residual < 1e-12

    def test_rank_deficient_escalates(self, rng):
        base = rng.normal(size=(10, 1))
        Psi = np.hstack([base, base])
        fit = compatible_critic_fit(Psi, base[:, 0])
        assert fit.escalations > 0
        np.testing.assert_allclose(Psi @ fit.theta, base[:, 0], atol=1e-6)

    def test_validated_prefers_no_ridge_on_clean_data(self, rng):
        Psi = rng.normal(size=(60, 3))
        fit = validated_critic_fit(Psi, Psi @ np.array([1.0, 2.0, 3.0]), np.repeat(np.arange(3), 20))
        assert fit.ridge == 0.0

    def test_shape_check(self):
        with pytest.raises(ValueError):
            compatible_critic_fit(np.ones((3, 2)), np.ones(4))


class TestRecurrent:
    def test_direction_against_stationary_oracle(self):
        r = np.random.default_rng(5)
        mdp, pol = regenerative_mdp(r)
        w = r.normal(size=pol.dim)
        _, g, _ = average_reward_oracle(mdp, pol, w)
        est = recurrent_state_estimates(mdp, pol, w, 200_000, 0, seed=3)
        cos = est.delta1 @ g / np.linalg.norm(est.delta1) / np.linalg.norm(g)
        assert cos > 0.95
        assert est.visits > 0 and not est.recurrent_state_missed

    def test_missed_recurrent_state(self):
        r = np.random.default_rng(5)
        mdp, pol = regenerative_mdp(r, return_prob=0.0)
        est = recurrent_state_estimates(mdp, pol, np.zeros(pol.dim), 1000, 0, start_state=1)
        assert est.recurrent_state_missed

    def test_seed_determinism(self):
        r = np.random.default_rng(5)
        mdp, pol = regenerative_mdp(r)
        a = recurrent_state_estimates(mdp, pol, np.ones(3), 5000, 0, seed=9)
        b = recurrent_state_estimates(mdp, pol, np.ones(3), 5000, 0, seed=9)
        np.testing.assert_array_equal(a.delta2, b.delta2)

    def test_rejects_gaussian(self, rng):
        mdp = random_mdp(rng, 2, 2)
        with pytest.raises(TypeError):
            recurrent_state_estimates(mdp, GaussianLinearPolicy(np.ones((2, 1)), 1.0), np.zeros(1), 10, 0)
