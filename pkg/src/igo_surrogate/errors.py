"""Exception hierarchy shared by all modules."""


class IGOError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(IGOError, ValueError):
    """An argument violates a documented precondition."""


class HypothesisError(InvalidInputError):
    """A weight scheme does not satisfy the ordering hypothesis a result needs.

    The theory results require ``w_i >= w_j`` for all ``i < j`` and
    ``w_1 > w_lambda``.
    """


class StepRejectedError(IGOError):
    """A parameter step would leave the covariance non positive definite."""

    def __init__(self, min_eigenvalue: float):
        self.min_eigenvalue = float(min_eigenvalue)
        super().__init__(
            f"covariance update not positive definite (smallest eigenvalue {self.min_eigenvalue:.6g})"
        )


class UndefinedCorrelationError(IGOError, ArithmeticError):
    """A correlation coefficient has a zero denominator."""


class SurrogateEvaluationError(IGOError):
    """A user-supplied surrogate evaluator failed or returned a non-finite value."""


class ConfigError(IGOError):
    """An experiment configuration is malformed or unresolvable."""
