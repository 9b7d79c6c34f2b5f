"""Exception types shared across the package."""


class NumericalFailure(RuntimeError):
    """A linear solve or decomposition broke down beyond recovery."""


class IndefinitePreconditioner(NumericalFailure):
    """A preconditioner that must be definite is not.

    ``min_eigenvalue`` carries the offending eigenvalue of the (negated)
    preconditioning matrix so callers can pick a ridge.
    """

    def __init__(self, message, min_eigenvalue):
        super().__init__(message)
        self.min_eigenvalue = float(min_eigenvalue)


class CGBreakdown(NumericalFailure):
    """Conjugate gradient met a direction with non-positive curvature."""

    def __init__(self, message, x, iterations, residuals):
        super().__init__(message)
        self.x = x
        self.iterations = iterations
        self.residuals = residuals


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending field."""
