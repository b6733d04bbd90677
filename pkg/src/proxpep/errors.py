"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """An argument is malformed (bad shape, wrong sign, empty set, ...)."""


class PreconditionViolation(ValueError):
    """An input violates a documented precondition of the callee."""


class InvalidState(ValueError):
    """A state object (duals, slacks) is outside its admissible region."""


class ConfigurationError(ValueError):
    """A parameter combination the method cannot be run with."""


class GenerationError(RuntimeError):
    """A problem generator could not satisfy its own construction targets."""


class UnsupportedSize(ValueError):
    """Requested instance is too large for an exhaustive routine."""


class ConvergenceFailure(RuntimeError):
    """An iterative solver ran out of iterations.

    The best iterate found so far and its residual are attached so callers
    can decide whether to accept it.
    """

    def __init__(self, message, best=None, residual=float("nan")):
        super().__init__(message)
        self.best = best
        self.residual = residual
