"""Exception types shared across the package."""


class QlmpcError(Exception):
    """Base class for package-specific errors."""


class ConfigError(QlmpcError, ValueError):
    """Invalid configuration, CLI arguments, or scenario definition."""


class SolverError(QlmpcError, RuntimeError):
    """Numerical failure inside a solve.

    Carries optional context such as the smallest eigenvalue of a
    factorization target or the smallest singular value of a
    rank-deficient constraint matrix.
    """

    def __init__(self, message, *, min_eigenvalue=None, smallest_singular_value=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue
        self.smallest_singular_value = smallest_singular_value
