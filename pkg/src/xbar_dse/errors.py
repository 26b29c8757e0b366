"""Exception types shared across the package."""


class DomainError(ValueError):
    """A physical parameter or bias point is outside its valid range."""


class StateError(RuntimeError):
    """An object is used before it reached the required state (e.g. uncalibrated)."""


class SingularNetworkError(RuntimeError):
    """The nodal system is structurally singular (floating nodes, no ground path)."""


class ConvergenceError(RuntimeError):
    """Newton iteration failed to converge."""

    def __init__(self, message, last_residual=None, iterations=None):
        super().__init__(message)
        self.last_residual = last_residual
        self.iterations = iterations
