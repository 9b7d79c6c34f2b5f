"""Differentiable policy classes.

Every policy exposes per-sample derivatives (``log_prob``,
``grad_log_policy``, ``hess_log_policy``) and, for use on tabular MDPs,
``action_moments``: expectations over each MDP action of the score, its
outer product and the log-Hessian, weighted by the action probability.
For discrete policies these are just ``pi * value``; for a Gaussian policy
acting through binned actions they are truncated-normal integrals, which
keeps the exact calculus exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class PolicyTraits:
    log_concave: bool
    constant_curvature: bool


@dataclass
class ActionMoments:
    """Per (state, MDP action) probability-weighted derivative moments.

    prob[s, a]      = P(a | s)
    score[s, a]     = E[grad log pi ; a]
    outer[s, a]     = E[grad grad^T ; a]
    hess[s, a]      = E[hess log pi ; a]
    """

    prob: np.ndarray
    score: np.ndarray
    outer: np.ndarray
    hess: np.ndarray


class Policy:
    dim: int
    discrete: bool = True

    @property
    def traits(self):
        raise NotImplementedError

    @property
    def block_map(self):
        return [slice(0, self.dim)]

    def check_params(self, w):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.dim,):
            raise ValueError(f"parameter vector must have length {self.dim}, got {w.shape}")
        return w

    def action_index(self, a):
        return int(a)

    def policy_matrix(self, w):
        return self.action_moments(w).prob

    def log_prob(self, w, s, a):
        raise NotImplementedError

    def grad_log_policy(self, w, s, a):
        raise NotImplementedError

    def hess_log_policy(self, w, s, a):
        raise NotImplementedError

    def sample_action(self, w, s, rng):
        raise NotImplementedError

    def action_moments(self, w):
        raise NotImplementedError

    def expected_log_prob(self, w_eval, w_anchor):
        """``E_{a ~ pi(w_anchor)}[log pi(a|s; w_eval) ; a]`` per (s, MDP action)."""
        raise NotImplementedError

    def cross_score(self, w_weight, w_score):
        """``E_{a ~ pi(w_weight)}[grad log pi(a|s; w_score) ; a]`` per (s, MDP action)."""
        raise NotImplementedError


def policy_traits(policy):
    return policy.traits


class GibbsPolicy(Policy):
    """``pi(a|s) ∝ exp(w . phi(s, a))`` over a feature table ``[S, A, n]``."""

    def __init__(self, features, blocks=None):
        phi = np.array(features, dtype=float)
        if phi.ndim != 3:
            raise ValueError("features must be indexed [state, action, feature]")
        if not np.all(np.isfinite(phi)):
            raise ValueError("features must be finite")
        phi.setflags(write=False)
        self.features = phi
        self.num_states, self.num_actions, self.dim = phi.shape
        self._blocks = blocks

    @property
    def traits(self):
        return PolicyTraits(True, True)

    @property
    def block_map(self):
        return self._blocks or [slice(0, self.dim)]

    def _log_pi(self, w):
        logits = self.features @ self.check_params(w)
        # logsumexp subtracts the row maximum before exponentiating
        return logits - logsumexp(logits, axis=1, keepdims=True)

    def probs(self, w):
        # renormalize: logsumexp loses ~1e-9 relative accuracy at logits of order 1e7
        p = np.exp(self._log_pi(w))
        return p / p.sum(axis=1, keepdims=True)

    def log_prob(self, w, s, a):
        return float(self._log_pi(w)[s, a])

    def _state_stats(self, w, s):
        phi = self.features[s]
        logits = phi @ self.check_params(w)
        p = np.exp(logits - logsumexp(logits))
        mean = p @ phi
        centred = phi - mean
        cov = (centred * p[:, None]).T @ centred
        return p, mean, 0.5 * (cov + cov.T)

    def grad_log_policy(self, w, s, a):
        _, mean, _ = self._state_stats(w, s)
        return self.features[s, a] - mean

    def hess_log_policy(self, w, s, a):
        _, _, cov = self._state_stats(w, s)
        return -cov

    def sample_action(self, w, s, rng):
        p, _, _ = self._state_stats(w, s)
        return int(rng.choice(self.num_actions, p=p))

    def scores(self, w):
        """All scores ``[S, A, n]``."""
        p = self.probs(w)
        mean = np.einsum("sa,san->sn", p, self.features)
        return self.features - mean[:, None, :]

    def log_hessians(self, w):
        """Per-state log-policy Hessian ``[S, n, n]`` (action independent)."""
        p = self.probs(w)
        psi = self.scores(w)
        cov = np.einsum("sa,sai,saj->sij", p, psi, psi)
        return -0.5 * (cov + np.swapaxes(cov, 1, 2))

    def action_moments(self, w):
        p = self.probs(w)
        psi = self.scores(w)
        hs = self.log_hessians(w)
        outer = np.einsum("sai,saj->saij", psi, psi)
        return ActionMoments(
            p,
            p[..., None] * psi,
            p[..., None, None] * outer,
            p[..., None, None] * hs[:, None],
        )

    def expected_log_prob(self, w_eval, w_anchor):
        return self.probs(w_anchor) * self._log_pi(w_eval)

    def cross_score(self, w_weight, w_score):
        return self.probs(w_weight)[..., None] * self.scores(w_score)


class TabularSoftmaxPolicy(GibbsPolicy):
    """Separate softmax parameters per state: one-hot Gibbs features.

    Parameter block ``s`` occupies ``[s*A, (s+1)*A)``.
    """

    def __init__(self, num_states, num_actions):
        n = num_states * num_actions
        phi = np.zeros((num_states, num_actions, n))
        for s in range(num_states):
            phi[s, np.arange(num_actions), s * num_actions + np.arange(num_actions)] = 1.0
        blocks = [slice(s * num_actions, (s + 1) * num_actions) for s in range(num_states)]
        super().__init__(phi, blocks)


def truncated_normal_moments(lo, hi):
    """``I_k = ∫_lo^hi z^k N(z) dz`` for k = 0..4; bounds may be infinite."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    pdf = lambda x: np.where(np.isfinite(x), np.exp(-0.5 * np.where(np.isfinite(x), x, 0.0) ** 2) / np.sqrt(2 * np.pi), 0.0)

    def term(x, k):
        xf = np.where(np.isfinite(x), x, 0.0)
        return np.where(np.isfinite(x), xf**k * pdf(x), 0.0)

    # upper-tail form avoids cancellation when both bounds are large
    upper = lo > 0
    I0 = np.where(upper, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))
    I1 = term(lo, 0) - term(hi, 0)
    I2 = I0 + term(lo, 1) - term(hi, 1)
    I3 = 2 * I1 + term(lo, 2) - term(hi, 2)
    I4 = 3 * I2 + term(lo, 3) - term(hi, 3)
    return np.stack([I0, I1, I2, I3, I4])


class GaussianLinearPolicy(Policy):
    """``pi(a|s) = N(a | w.phi(s), sigma^2)``.

    ``features`` is a table ``[S, m]`` or a callable ``s -> phi``. With
    ``learn_sigma`` the parameter vector is ``[w_mean, log sigma]``. With
    ``noise="parameter"`` the exploration noise lives on the weights,
    ``a = (w + eps).phi``, so the action scale is ``sigma * |phi(s)|``.
    ``bin_edges`` maps the continuous action onto MDP action indices.
    """

    discrete = False

    def __init__(self, features, sigma, learn_sigma=False, bin_edges=None, noise="action", num_features=None):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        if noise not in ("action", "parameter"):
            raise ValueError("noise must be 'action' or 'parameter'")
        if callable(features):
            self._phi_fn = features
            self.table = None
            if num_features is None:
                raise ValueError("callable feature maps need num_features")
            self.num_features = int(num_features)
        else:
            tab = np.array(features, dtype=float)
            if tab.ndim != 2:
                raise ValueError("feature table must be [S, m]")
            tab.setflags(write=False)
            self.table = tab
            self._phi_fn = None
            self.num_features = tab.shape[1]
        self.sigma = float(sigma)
        self.learn_sigma = bool(learn_sigma)
        self.noise = noise
        self.dim = self.num_features + (1 if learn_sigma else 0)
        self.bin_edges = None if bin_edges is None else np.array(sorted(bin_edges), dtype=float)

    @property
    def traits(self):
        if self.learn_sigma:
            return PolicyTraits(False, False)
        return PolicyTraits(True, True)

    @property
    def block_map(self):
        m = self.num_features
        if self.learn_sigma:
            return [slice(0, m), slice(m, m + 1)]
        return [slice(0, m)]

    @property
    def num_actions(self):
        return 1 if self.bin_edges is None else len(self.bin_edges) + 1

    def initial_params(self, w_mean=None):
        w = np.zeros(self.num_features) if w_mean is None else np.asarray(w_mean, dtype=float)
        if self.learn_sigma:
            w = np.append(w, np.log(self.sigma))
        return w

    def phi(self, s):
        if self.table is not None:
            return self.table[s]
        return np.asarray(self._phi_fn(s), dtype=float)

    def _split(self, w):
        w = self.check_params(w)
        m = self.num_features
        base_sigma = float(np.exp(w[m])) if self.learn_sigma else self.sigma
        return w[:m], base_sigma

    def _scale(self, base_sigma, phi):
        if self.noise == "parameter":
            return base_sigma * np.linalg.norm(phi, axis=-1)
        return base_sigma * np.ones(np.shape(phi)[:-1])

    def mean_and_scale(self, w, s):
        wm, bs = self._split(w)
        phi = self.phi(s)
        return float(phi @ wm), float(self._scale(bs, phi)), phi

    def log_prob(self, w, s, a):
        mu, sd, _ = self.mean_and_scale(w, s)
        z = (a - mu) / sd
        return float(-0.5 * z * z - np.log(sd) - 0.5 * LOG_2PI)

    def grad_log_policy(self, w, s, a):
        return self.score_batch(w, self.phi(s)[None], np.array([a]))[0]

    def hess_log_policy(self, w, s, a):
        return self.hess_batch(w, self.phi(s)[None], np.array([a]))[0]

    def sample_action(self, w, s, rng):
        mu, sd, _ = self.mean_and_scale(w, s)
        return float(mu + sd * rng.standard_normal())

    def action_index(self, a):
        if self.bin_edges is None:
            return 0
        return int(np.searchsorted(self.bin_edges, a, side="left"))

    # vectorized per-sample derivatives over feature rows Phi [N, m]
    def score_batch(self, w, Phi, a):
        wm, bs = self._split(w)
        Phi = np.asarray(Phi, dtype=float)
        sd = self._scale(bs, Phi)
        z = (np.asarray(a, dtype=float) - Phi @ wm) / sd
        out = (z / sd)[:, None] * Phi
        if self.learn_sigma:
            out = np.hstack([out, (z * z - 1.0)[:, None]])
        return out

    def hess_batch(self, w, Phi, a):
        wm, bs = self._split(w)
        Phi = np.asarray(Phi, dtype=float)
        sd = self._scale(bs, Phi)
        z = (np.asarray(a, dtype=float) - Phi @ wm) / sd
        m = self.num_features
        H = np.zeros((len(Phi), self.dim, self.dim))
        H[:, :m, :m] = -np.einsum("ni,nj->nij", Phi, Phi) / (sd**2)[:, None, None]
        if self.learn_sigma:
            cross = (-2.0 * z / sd)[:, None] * Phi
            H[:, :m, m] = cross
            H[:, m, :m] = cross
            H[:, m, m] = -2.0 * z * z
        return H

    def sample_batch(self, w, Phi, rng):
        wm, bs = self._split(w)
        Phi = np.asarray(Phi, dtype=float)
        return Phi @ wm + self._scale(bs, Phi) * rng.standard_normal(len(Phi))

    # exact per-bin moments on a tabular MDP
    def _bin_integrals(self, w):
        if self.table is None:
            raise ValueError("exact moments need a tabular feature map")
        edges = np.concatenate([[-np.inf], self.bin_edges if self.bin_edges is not None else [], [np.inf]])
        wm, bs = self._split(w)
        mu = self.table @ wm
        sd = self._scale(bs, self.table)
        lo = (edges[None, :-1] - mu[:, None]) / sd[:, None]
        hi = (edges[None, 1:] - mu[:, None]) / sd[:, None]
        return truncated_normal_moments(lo, hi), mu, sd

    def action_moments(self, w):
        I, _, sd = self._bin_integrals(w)
        phi = self.table
        m = self.num_features
        S, A = I.shape[1:]
        n = self.dim
        pp = np.einsum("si,sj->sij", phi, phi) / (sd**2)[:, None, None]
        score = np.zeros((S, A, n))
        outer = np.zeros((S, A, n, n))
        hess = np.zeros((S, A, n, n))
        score[..., :m] = (I[1] / sd[:, None])[..., None] * phi[:, None, :]
        outer[..., :m, :m] = I[2][..., None, None] * pp[:, None]
        hess[..., :m, :m] = -I[0][..., None, None] * pp[:, None]
        if self.learn_sigma:
            score[..., m] = I[2] - I[0]
            c = ((I[3] - I[1]) / sd[:, None])[..., None] * phi[:, None, :]
            outer[..., :m, m] = c
            outer[..., m, :m] = c
            outer[..., m, m] = I[4] - 2 * I[2] + I[0]
            h = (-2.0 * I[1] / sd[:, None])[..., None] * phi[:, None, :]
            hess[..., :m, m] = h
            hess[..., m, :m] = h
            hess[..., m, m] = -2.0 * I[2]
        return ActionMoments(I[0], score, outer, hess)

    def bin_first_moments(self, w):
        """``E[a ; bin]`` and ``P(bin)`` per (state, bin)."""
        I, mu, sd = self._bin_integrals(w)
        return mu[:, None] * I[0] + sd[:, None] * I[1], I[0]

    def _shifted_second_moment(self, I, mu, sd, mu_new):
        # E[(a - mu_new)^2 ; bin] under N(mu, sd^2)
        delta = (mu - mu_new)[:, None]
        return (sd**2)[:, None] * I[2] + 2 * sd[:, None] * delta * I[1] + delta**2 * I[0]

    def expected_log_prob(self, w_eval, w_anchor):
        I, mu, sd = self._bin_integrals(w_anchor)
        wm, bs = self._split(w_eval)
        mu_e = self.table @ wm
        sd_e = self._scale(bs, self.table)
        sq = self._shifted_second_moment(I, mu, sd, mu_e)
        return -(np.log(sd_e) + 0.5 * LOG_2PI)[:, None] * I[0] - sq / (2 * sd_e**2)[:, None]

    def cross_score(self, w_weight, w_score):
        I, mu, sd = self._bin_integrals(w_weight)
        wm, bs = self._split(w_score)
        mu_s = self.table @ wm
        sd_s = self._scale(bs, self.table)
        first = sd[:, None] * I[1] + (mu - mu_s)[:, None] * I[0]
        out = np.zeros(I.shape[1:] + (self.dim,))
        m = self.num_features
        out[..., :m] = (first / (sd_s**2)[:, None])[..., None] * self.table[:, None, :]
        if self.learn_sigma:
            out[..., m] = self._shifted_second_moment(I, mu, sd, mu_s) / (sd_s**2)[:, None] - I[0]
        return out


class AffineReparametrizedPolicy(Policy):
    """The policy ``base`` evaluated at ``T v + shift`` as a function of ``v``."""

    def __init__(self, base, T, shift=None):
        T = np.array(T, dtype=float)
        if T.shape != (base.dim, base.dim):
            raise ValueError("T must be square of the base dimension")
        self.base = base
        self.T = T
        self.shift = np.zeros(base.dim) if shift is None else np.asarray(shift, dtype=float)
        self.dim = base.dim
        self.discrete = base.discrete

    @property
    def traits(self):
        return self.base.traits

    def to_base(self, v):
        return self.T @ self.check_params(v) + self.shift

    def from_base(self, w):
        return np.linalg.solve(self.T, np.asarray(w, dtype=float) - self.shift)

    def action_index(self, a):
        return self.base.action_index(a)

    def log_prob(self, v, s, a):
        return self.base.log_prob(self.to_base(v), s, a)

    def grad_log_policy(self, v, s, a):
        return self.T.T @ self.base.grad_log_policy(self.to_base(v), s, a)

    def hess_log_policy(self, v, s, a):
        return self.T.T @ self.base.hess_log_policy(self.to_base(v), s, a) @ self.T

    def sample_action(self, v, s, rng):
        return self.base.sample_action(self.to_base(v), s, rng)

    def action_moments(self, v):
        mo = self.base.action_moments(self.to_base(v))
        T = self.T
        return ActionMoments(
            mo.prob,
            mo.score @ T,
            np.einsum("ki,sakl,lj->saij", T, mo.outer, T),
            np.einsum("ki,sakl,lj->saij", T, mo.hess, T),
        )

    def expected_log_prob(self, v_eval, v_anchor):
        return self.base.expected_log_prob(self.to_base(v_eval), self.to_base(v_anchor))

    def cross_score(self, v_weight, v_score):
        return self.base.cross_score(self.to_base(v_weight), self.to_base(v_score)) @ self.T
