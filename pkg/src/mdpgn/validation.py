"""Randomized identity, definiteness and invariance suites behind ``validate``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calculus import (
    check_value_consistency, evaluate, expected_return_at, fd_derivative_oracle,
    fisher_information, hessian_decomposition,
)
from .envs.gridworlds import build_mccallum
from .envs.synthetic import average_reward_oracle, regenerative_mdp
from .estimators import recurrent_state_estimates
from .linalg import eigen_symmetric, solve_symmetric
from .mdp import random_mdp
from .optimizers import (
    ExactProblem, StepSchedule, UpdateRule, cg_gauss_newton_direction, compute_direction,
    exact_h2_weights, fd_h2_operator, run_policy_search,
)
from .policies import AffineReparametrizedPolicy, GaussianLinearPolicy, GibbsPolicy, TabularSoftmaxPolicy


@dataclass
class PropertyResult:
    suite: str
    name: str
    seed: int
    passed: bool
    detail: str

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} [{self.suite}] {self.name} (seed {self.seed}): {self.detail}"


def _rel(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def random_gibbs_instance(rng, max_states=5, max_actions=3, discount=0.9):
    S = int(rng.integers(2, max_states + 1))
    A = int(rng.integers(2, max_actions + 1))
    n = int(rng.integers(1, 4))
    mdp = random_mdp(rng, S, A, discount)
    return mdp, GibbsPolicy(rng.normal(size=(S, A, n))), rng.normal(size=n)


def finite_optimum_instance():
    """3-state Gibbs instance with an interior optimum (negative-definite Hessian there)."""
    rng = np.random.default_rng(26)
    mdp = random_mdp(rng, 3, 3, 0.9)
    policy = GibbsPolicy(rng.normal(size=(3, 3, 2)))
    return mdp, policy


def converge(mdp, policy, w0, iterations=200):
    """Polish to a stationary point: damped GN2 followed by Newton steps."""
    w, _ = run_policy_search(ExactProblem(mdp, policy), w0, UpdateRule("gauss_newton_2"),
                             StepSchedule("constant", 0.5), iterations)
    for _ in range(30):
        hd = hessian_decomposition(mdp, policy, w)
        if np.linalg.norm(hd.grad) < 1e-13:
            break
        w = w - np.linalg.solve(hd.hessian, hd.grad)
    return w


def suite_gradient(seed, count=50):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        mdp, pol, w = random_gibbs_instance(rng)
        g = hessian_decomposition(mdp, pol, w).grad
        fd = fd_derivative_oracle(lambda x: expected_return_at(mdp, pol, x), w, 1, h=1e-3, richardson=True)
        worst = max(worst, _rel(g, fd))
    return [PropertyResult("gradient", "exact gradient vs central differences", seed, worst <= 1e-6, f"max rel err {worst:.2e}")]


def suite_hessian(seed, count=50):
    rng = np.random.default_rng(seed)
    worst_fd = worst_id = 0.0
    for _ in range(count):
        mdp, pol, w = random_gibbs_instance(rng)
        hd = hessian_decomposition(mdp, pol, w)
        fd = fd_derivative_oracle(lambda x: expected_return_at(mdp, pol, x), w, 2, h=4e-3, richardson=True)
        worst_fd = max(worst_fd, _rel(hd.hessian, fd))
        G_outer, G_curv = fisher_information(mdp, pol, w)
        scale = max(np.max(np.abs(hd.hessian)), 1.0)
        errs = [
            np.max(np.abs(hd.A1 - (hd.H1 - hd.V1))), np.max(np.abs(hd.A2 - (hd.H2 - hd.V2))),
            np.max(np.abs(hd.V1 + hd.V2)), np.max(np.abs(hd.A2)), np.max(np.abs(G_outer - G_curv)),
        ]
        worst_id = max(worst_id, max(errs) / scale)
    return [
        PropertyResult("hessian", "H1+H2+H12+H12^T vs FD Hessian", seed, worst_fd <= 1e-5, f"max rel err {worst_fd:.2e}"),
        PropertyResult("hessian", "A/V identities and Fisher forms", seed, worst_id <= 1e-9, f"max err {worst_id:.2e}"),
    ]


def suite_definiteness(seed, count=100):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, 4, 3, 0.9, reward_low=0.1)
    pol = GibbsPolicy(rng.normal(size=(4, 3, 3)))
    top = -np.inf
    bottom = np.inf
    for _ in range(count):
        hd = hessian_decomposition(mdp, pol, 2 * rng.normal(size=3))
        top = max(top, eigen_symmetric(hd.H2)[-1])
        bottom = min(bottom, eigen_symmetric(hd.H1 + hd.cross)[0])
    return [
        PropertyResult("definiteness", "H2 negative semi-definite", seed, top <= 1e-10, f"max eig {top:.2e}"),
        PropertyResult("definiteness", "H1+H12+H12^T positive semi-definite", seed, bottom >= -1e-10, f"min eig {bottom:.2e}"),
    ]


def _traces_match(mdp, base, T, w0, rule, alpha, iterations=20):
    _, tr = run_policy_search(ExactProblem(mdp, base), w0, rule, StepSchedule("constant", alpha), iterations)
    rep = AffineReparametrizedPolicy(base, T)
    _, tr2 = run_policy_search(ExactProblem(mdp, rep), rep.from_base(w0), rule, StepSchedule("constant", alpha), iterations)
    mapped = np.array([T @ v for v in tr2.iterates])
    orig = np.array(tr.iterates)
    n = min(len(mapped), len(orig))
    return _rel(mapped[:n], orig[:n])


def suite_affine(seed):
    rng = np.random.default_rng(seed)
    out = []
    mdp = random_mdp(rng, 4, 3, 0.9)
    pol = GibbsPolicy(rng.normal(size=(4, 3, 3)))
    T = rng.normal(size=(3, 3)) + 2 * np.eye(3)
    err = _traces_match(mdp, pol, T, rng.normal(size=3), UpdateRule("gauss_newton_2"), 0.5)
    out.append(PropertyResult("affine", "GN2 invariance under random T", seed, err <= 1e-8, f"rel dev {err:.2e}"))
    fmdp, fpol = finite_optimum_instance()
    w_star = converge(fmdp, fpol, np.zeros(2))
    err = _traces_match(fmdp, fpol, T[:2, :2], w_star + 0.05 * rng.normal(size=2), UpdateRule("gauss_newton_1"), 0.5)
    out.append(PropertyResult("affine", "GN1 invariance near optimum", seed, err <= 1e-8, f"rel dev {err:.2e}"))
    D = np.diag(rng.uniform(0.3, 3.0, size=3))
    err = _traces_match(mdp, pol, D, rng.normal(size=3), UpdateRule("diag_gn_2"), 0.5)
    out.append(PropertyResult("affine", "diagonal GN2 invariance under diagonal T", seed, err <= 1e-8, f"rel dev {err:.2e}"))
    err = _traces_match(mdp, pol, np.diag([10.0, 1.0, 0.1]), rng.normal(size=3), UpdateRule("steepest"), 0.05)
    out.append(PropertyResult("affine", "steepest ascent is not invariant (negative control)", seed, err >= 1e-3, f"rel dev {err:.2e}"))
    return out


def em_gn_instance(seed=3):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, 5, 4, 0.9)
    policy = GaussianLinearPolicy(rng.normal(size=(5, 2)), 0.8, bin_edges=[-0.5, 0.0, 0.5])
    return mdp, policy, rng.normal(size=2)


def suite_em_gn(seed):
    mdp, pol, w0 = em_gn_instance(3 + seed)
    prob = ExactProblem(mdp, pol)
    _, t_em = run_policy_search(prob, w0, UpdateRule("em"), StepSchedule("constant", 1.0), 20, grad_tol=0.0)
    _, t_gn = run_policy_search(prob, w0, UpdateRule("gauss_newton_2"), StepSchedule("constant", 1.0), 20, grad_tol=0.0)
    err = float(np.max(np.abs(np.array(t_em.iterates) - np.array(t_gn.iterates))))
    return [PropertyResult("em-gn", "EM iterates equal GN2 (alpha=1) iterates", seed, err <= 1e-8, f"max dev {err:.2e}")]


def fitted_rate(iterates, w_star, skip=3, floor=1e-11):
    errs = np.array([np.linalg.norm(w - w_star) for w in iterates])
    keep = np.flatnonzero(errs > floor)
    keep = keep[keep >= skip]
    if len(keep) < 3:
        return float("nan")
    slope = np.polyfit(keep, np.log(errs[keep]), 1)[0]
    return float(np.exp(slope))


def suite_rates(seed):
    mdp, pol = finite_optimum_instance()
    w_star = converge(mdp, pol, np.zeros(2))
    hd = hessian_decomposition(mdp, pol, w_star)
    M = np.linalg.solve(hd.H2, hd.hessian)
    eig = np.real(np.linalg.eigvals(M))
    rho = float(np.max(np.abs(np.linalg.eigvals(np.eye(2) - M))))
    w0 = w_star + 0.3 * np.random.default_rng(seed).normal(size=2)
    prob = ExactProblem(mdp, pol)
    _, tg = run_policy_search(prob, w0, UpdateRule("gauss_newton_2"), StepSchedule("constant", 1.0), 400, grad_tol=0.0)
    _, te = run_policy_search(prob, w0, UpdateRule("em"), StepSchedule("constant", 1.0), 400, grad_tol=0.0)
    rg = fitted_rate(tg.iterates, w_star)
    re = fitted_rate(te.iterates, w_star)
    ok_eig = bool(np.all(eig > -1e-8) and np.all(eig < 1 + 1e-8))
    return [
        PropertyResult("rates", "eigenvalues of H2^-1 H in (0,1)", seed, ok_eig, f"eigs {np.round(eig, 6).tolist()}"),
        PropertyResult("rates", "GN2 linear rate matches rho", seed, abs(rg - rho) <= 0.1 * rho, f"fitted {rg:.5f} vs {rho:.5f}"),
        PropertyResult("rates", "EM linear rate matches rho", seed, abs(re - rho) <= 0.1 * rho, f"fitted {re:.5f} vs {rho:.5f}"),
    ]


def suite_cg(seed):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, 4, 3, 0.9)
    pol = GibbsPolicy(rng.normal(size=(4, 3, 4)))
    w = rng.normal(size=4)
    hd = hessian_decomposition(mdp, pol, w)
    direct = compute_direction(UpdateRule("gauss_newton_2"), hd)
    res = cg_gauss_newton_direction(hd.grad, -hd.H2, k_max=4)
    err = _rel(res.direction, direct)
    ascent = all(float(hd.grad @ x) > 0 for x in res.iterates)
    op = fd_h2_operator(pol, w, exact_h2_weights(mdp, pol, w), 1e-6)
    worst = 0.0
    for _ in range(5):
        p = rng.normal(size=4)
        exact = -hd.H2 @ p
        worst = max(worst, float(np.linalg.norm(op(p) - exact) / np.linalg.norm(exact)))
    return [
        PropertyResult("cg", "CG with k=n matches direct GN2", seed, err <= 1e-6, f"rel err {err:.2e}"),
        PropertyResult("cg", "warm-started CG iterates ascend", seed, ascent, f"{len(res.iterates)} iterates"),
        PropertyResult("cg", "FD product matches exact product", seed, worst <= 1e-3, f"max rel err {worst:.2e}"),
    ]


def suite_consistency(seed, count=100):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, 4, 3, 0.9)
    pol = TabularSoftmaxPolicy(4, 3)
    fails = sum(not check_value_consistency(mdp, pol, rng.normal(size=pol.dim)).consistent_at_w for _ in range(count))
    mdp_m, pol_m = build_mccallum()
    w_star = converge(mdp_m, pol_m, np.zeros(pol_m.dim), 300)
    rep = check_value_consistency(mdp_m, pol_m, w_star)
    aliased = {3, 4, 5}
    hit = [wt for wt in rep.witnesses if wt[1] in aliased or wt[2] in aliased]
    return [
        PropertyResult("consistency", "tabular softmax is value consistent", seed, fails == 0, f"{fails} failures in {count}"),
        PropertyResult("consistency", "McCallum wall features are not", seed, bool(hit), f"{len(hit)} aliased witnesses"),
    ]


def suite_recurrent(seed):
    rng = np.random.default_rng(seed)
    mdp, pol = regenerative_mdp(rng)
    w = rng.normal(size=pol.dim)
    _, g, H2 = average_reward_oracle(mdp, pol, w)
    est = recurrent_state_estimates(mdp, pol, w, 10**6, 0, seed=seed)
    cos = float(est.delta1 @ g / (np.linalg.norm(est.delta1) * np.linalg.norm(g)))
    D = 0.5 * (est.delta2 + est.delta2.T)
    dev = float(np.max(np.abs(D / np.linalg.norm(D) - H2 / np.linalg.norm(H2))))
    return [
        PropertyResult("recurrent", "trace gradient direction", seed, cos >= 0.99, f"cosine {cos:.5f}"),
        PropertyResult("recurrent", "trace H2 direction", seed, dev <= 0.05, f"max-norm dev {dev:.2e}"),
    ]


def suite_natural(seed):
    """GN2 and natural directions coincide up to scale when Q is constant."""
    rng = np.random.default_rng(seed)
    S, A = 4, 3
    P = rng.dirichlet(np.ones(S), size=(S, A))
    R = np.full((S, A), 0.7)
    from .mdp import TabularMdp

    mdp = TabularMdp(P, R, rng.dirichlet(np.ones(S)), 0.9)
    pol = GibbsPolicy(rng.normal(size=(S, A, 3)))
    hd = hessian_decomposition(mdp, pol, rng.normal(size=3))
    gn = compute_direction(UpdateRule("gauss_newton_2"), hd)
    nat = compute_direction(UpdateRule("natural"), hd)
    scale = float(gn @ nat / (nat @ nat)) if np.any(nat) else 0.0
    err = float(np.max(np.abs(gn - scale * nat))) if np.any(nat) else float(np.max(np.abs(gn)))
    return [PropertyResult("natural", "GN2 equals natural direction when Q is constant", seed,
                           err <= 1e-9 and scale >= 0, f"dev {err:.2e}, scale {scale:.3g}")]


SUITES = {
    "gradient": suite_gradient,
    "hessian": suite_hessian,
    "definiteness": suite_definiteness,
    "affine": suite_affine,
    "em-gn": suite_em_gn,
    "rates": suite_rates,
    "cg": suite_cg,
    "consistency": suite_consistency,
    "recurrent": suite_recurrent,
    "natural": suite_natural,
}


def run_validation(suite="all", seed=0):
    names = list(SUITES) if suite == "all" else [suite]
    results = []
    for name in names:
        if name not in SUITES:
            raise KeyError(name)
        results.extend(SUITES[name](seed))
    return results
