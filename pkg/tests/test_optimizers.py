import numpy as np
import pytest

from mdpgn.calculus import em_surrogate_value, evaluate, fd_derivative_oracle, hessian_decomposition
from mdpgn.envs.gridworlds import build_hallway
from mdpgn.exceptions import IndefinitePreconditioner, NumericalFailure
from mdpgn.optimizers import (
    ExactProblem, StepSchedule, UpdateRule, cg_gauss_newton_direction, compute_direction, em_step_gaussian,
    em_step_gibbs, exact_h2_weights, fd_h2_operator, grid_line_search, run_policy_search, two_point_line_search,
)
from mdpgn.mdp import random_mdp
from mdpgn.policies import GaussianLinearPolicy, GibbsPolicy


class TestDirections:
    def test_rules_against_manual_solves(self, small_instance):
        mdp, pol, w = small_instance
        hd = hessian_decomposition(mdp, pol, w)
        g = hd.grad
        np.testing.assert_allclose(compute_direction(UpdateRule("steepest"), hd), g)
        np.testing.assert_allclose(compute_direction(UpdateRule("natural"), hd), np.linalg.solve(hd.fisher, g))
        np.testing.assert_allclose(compute_direction(UpdateRule("gauss_newton_2"), hd), np.linalg.solve(-hd.H2, g))
        np.testing.assert_allclose(compute_direction(UpdateRule("diag_gn_2"), hd), g / -np.diag(hd.H2))

    def test_gn2_is_ascent(self, small_instance):
        mdp, pol, w = small_instance
        hd = hessian_decomposition(mdp, pol, w)
        assert hd.grad @ compute_direction(UpdateRule("gauss_newton_2"), hd) > 0

    def test_gn1_indefinite_raises(self):
        g = np.array([1.0, 0.0])
        curv = {"grad": g, "A1": np.diag([-1.0, 0.5]), "A2": np.zeros((2, 2))}
        with pytest.raises(IndefinitePreconditioner):
            compute_direction(UpdateRule("gauss_newton_1"), curv)
        d = compute_direction(UpdateRule("gauss_newton_1", ridge=2.0), curv)
        np.testing.assert_allclose(d, [1 / 3, 0.0])

    def test_zero_gradient(self):
        d = compute_direction(UpdateRule("natural"), {"grad": np.zeros(2), "fisher": np.eye(2)})
        assert not np.any(d)

    def test_unknown_rule(self):
        with pytest.raises(ValueError):
            UpdateRule("newton")

    def test_blockwise_natural(self, rng):
        G = np.array([[2.0, 0.5, 0.1], [0.5, 1.0, 0.2], [0.1, 0.2, 3.0]])
        g = rng.normal(size=3)
        d = compute_direction(UpdateRule("natural", blockwise=(slice(0, 2), slice(2, 3))), {"grad": g, "fisher": G})
        np.testing.assert_allclose(d[:2], np.linalg.solve(G[:2, :2], g[:2]))
        assert d[2] == pytest.approx(g[2] / 3.0)


class TestCg:
    def test_full_iterations_match_direct(self, small_instance):
        mdp, pol, w = small_instance
        hd = hessian_decomposition(mdp, pol, w)
        res = cg_gauss_newton_direction(hd.grad, -hd.H2, k_max=3)
        np.testing.assert_allclose(res.direction, np.linalg.solve(-hd.H2, hd.grad), rtol=1e-6)
        assert all(hd.grad @ x > 0 for x in res.iterates)

    def test_fd_operator(self, small_instance, rng):
        mdp, pol, w = small_instance
        hd = hessian_decomposition(mdp, pol, w)
        op = fd_h2_operator(pol, w, exact_h2_weights(mdp, pol, w))
        p = rng.normal(size=3)
        np.testing.assert_allclose(op(p), -hd.H2 @ p, rtol=1e-4)

    def test_cg_rule_in_loop(self, small_instance):
        mdp, pol, w = small_instance
        prob = ExactProblem(mdp, pol)
        _, a = run_policy_search(prob, w, UpdateRule("cg_gn_2"), StepSchedule("constant", 0.5), 5)
        _, b = run_policy_search(prob, w, UpdateRule("gauss_newton_2"), StepSchedule("constant", 0.5), 5)
        np.testing.assert_allclose(a.iterates[-1], b.iterates[-1], rtol=1e-6)


class TestEm:
    def test_gibbs_m_step_maximizes_surrogate(self, small_instance):
        mdp, pol, w = small_instance
        w_new = em_step_gibbs(mdp, pol, w)
        grad = fd_derivative_oracle(lambda x: em_surrogate_value(mdp, pol, x, w), w_new, 1, h=1e-3, richardson=True)
        assert np.max(np.abs(grad)) < 1e-8

    def test_gaussian_m_step_is_gn2_unit_step(self, rng):
        mdp = random_mdp(rng, 4, 3, 0.9)
        pol = GaussianLinearPolicy(rng.normal(size=(4, 2)), 0.7, bin_edges=[-0.4, 0.4])
        w = rng.normal(size=2)
        hd = hessian_decomposition(mdp, pol, w)
        np.testing.assert_allclose(em_step_gaussian(mdp, pol, w) - w, np.linalg.solve(-hd.H2, hd.grad), atol=1e-12)

    def test_type_checks(self, small_instance):
        mdp, pol, w = small_instance
        with pytest.raises(TypeError):
            em_step_gaussian(mdp, pol, w)


class TestLineSearch:
    def test_grid_picks_best_and_smallest_tie(self):
        f = lambda x: -abs(x[0] - 4.0)
        res = grid_line_search(f, np.zeros(1), np.ones(1), (1.0, 2.0, 4.0, 8.0))
        assert res.step == 4.0
        res = grid_line_search(lambda x: 1.0, np.zeros(1), np.ones(1), (2.0, 1.0))
        assert res.step == 1.0

    def test_two_point_reverts(self):
        f = lambda x: -x[0] ** 2
        res = two_point_line_search(f, np.array([1.0]), np.array([-1.0]), 3.0)
        assert not res.accepted and res.w[0] == 1.0
        res = two_point_line_search(f, np.array([1.0]), np.array([-1.0]), 1.0)
        assert res.accepted and res.w[0] == 0.0


class TestLoop:
    def test_zero_iterations_records_start(self, small_instance):
        mdp, pol, w = small_instance
        _, tr = run_policy_search(ExactProblem(mdp, pol), w, UpdateRule(), StepSchedule(), 0)
        assert len(tr) == 1 and tr.rows[0]["iteration"] == 0
        assert tr.rows[0]["return"] == pytest.approx(evaluate(mdp, pol, w).value)

    @pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
    def test_hallway_gn2_monotone(self, alpha):
        mdp, pol = build_hallway()
        _, tr = run_policy_search(ExactProblem(mdp, pol), np.zeros(pol.dim), UpdateRule("gauss_newton_2"),
                                  StepSchedule("constant", alpha), 40)
        assert np.all(np.diff(tr.column("return")) >= -1e-12)

    def test_nonfinite_direction(self, small_instance):
        mdp, pol, w = small_instance

        class Broken(ExactProblem):
            def direction(self, rule, curv, w):
                return np.full(len(w), np.nan)

        with pytest.raises(NumericalFailure, match="non-finite"):
            run_policy_search(Broken(mdp, pol), w, UpdateRule(), StepSchedule(), 3)

    def test_stops_at_stationary_point(self):
        mdp = random_mdp(np.random.default_rng(0), 2, 2)
        pol = GibbsPolicy(np.zeros((2, 2, 1)))
        _, tr = run_policy_search(ExactProblem(mdp, pol), np.zeros(1), UpdateRule("steepest"), StepSchedule(), 10)
        assert len(tr) == 1

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            StepSchedule("constant", alpha=-1.0)
        assert StepSchedule("decaying", 1.0).base_step(100) == pytest.approx(0.5)
