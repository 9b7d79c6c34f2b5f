"""Exact and sampled Gauss-Newton policy search for Markov decision processes."""

from .calculus import (
    Evaluation, HessianDecomposition, check_value_consistency, em_surrogate_value, evaluate,
    expected_return_at, fd_derivative_oracle, fisher_information, hessian_decomposition,
    policy_gradient_exact, value_gradients,
)
from .estimators import (
    compatible_critic_fit, likelihood_ratio_estimates, recurrent_state_estimates, validated_critic_fit,
)
from .exceptions import CGBreakdown, ConfigError, IndefinitePreconditioner, NumericalFailure
from .kernels import BACKEND
from .mdp import TabularMdp, Trajectory, random_mdp, sample_trajectory
from .optimizers import (
    ExactProblem, StepSchedule, UpdateRule, cg_gauss_newton_direction, compute_direction,
    grid_line_search, run_policy_search, two_point_line_search,
)
from .policies import AffineReparametrizedPolicy, GaussianLinearPolicy, GibbsPolicy, TabularSoftmaxPolicy

__version__ = "0.1.0"

__all__ = [
    "AffineReparametrizedPolicy", "BACKEND", "CGBreakdown", "ConfigError", "Evaluation", "ExactProblem",
    "GaussianLinearPolicy", "GibbsPolicy", "HessianDecomposition", "IndefinitePreconditioner",
    "NumericalFailure", "StepSchedule", "TabularMdp", "TabularSoftmaxPolicy", "Trajectory", "UpdateRule",
    "cg_gauss_newton_direction", "check_value_consistency", "compatible_critic_fit", "compute_direction",
    "em_surrogate_value", "evaluate", "expected_return_at", "fd_derivative_oracle", "fisher_information",
    "grid_line_search", "hessian_decomposition", "likelihood_ratio_estimates", "policy_gradient_exact",
    "random_mdp", "recurrent_state_estimates", "run_policy_search", "sample_trajectory",
    "two_point_line_search", "validated_critic_fit", "value_gradients",
]
