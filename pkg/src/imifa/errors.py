"""Exception hierarchy shared by all modules."""


class ImifaError(Exception):
    """Base class for library errors."""


class ValidationError(ImifaError, ValueError):
    """Invalid configuration, parameter, or input shape."""


class ParseError(ValidationError):
    """Malformed input file."""


class DegenerateColumnError(ValidationError):
    """Zero-variance column where scaling needs a positive standard deviation."""


class ShrinkageConditionError(ValidationError):
    """MGP hyperparameters violate alpha2 > beta2 + 1."""


class FactorizationError(ImifaError, ArithmeticError):
    """A Cholesky factorization failed (matrix not positive definite)."""


class NoSupportError(ImifaError, ValueError):
    """Every categorical log weight is -inf."""


class CriterionMismatchError(ValidationError):
    """Criterion requested for a model kind it does not apply to."""


class InsufficientSamplesError(ValidationError):
    """Too few stored samples to compute a quantity."""


class SamplerError(ImifaError, RuntimeError):
    """Numerical failure inside an MCMC sweep.

    Carries the iteration at which the failure happened.
    """

    def __init__(self, iteration, message):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration
