"""Exception types shared across the package.

Invalid arguments raise plain ``ValueError``; the classes here mark
conditions the CLI maps to distinct exit codes.
"""


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration (exit code 2)."""


class ResourceLimitError(RuntimeError):
    """A computation exceeded its configured resource cap (exit code 3)."""


class InvariantFailure(RuntimeError):
    """A certify-mode invariant check failed (exit code 4)."""


class NonConvergenceError(RuntimeError):
    """Fixed-point solver failed to converge from every start (exit code 5).

    Carries the best residual seen so the caller can judge how close it got.
    """

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual
