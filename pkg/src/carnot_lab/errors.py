"""Exception types raised across carnot_lab."""


class CarnotLabError(Exception):
    """Base class for library errors."""


class ModelMismatchError(CarnotLabError, ValueError):
    """Operands built for different ranks or coordinate conventions."""


class DomainError(CarnotLabError, ValueError):
    """Argument outside the domain of an operation."""


class DegenerateNormError(CarnotLabError, ValueError):
    """Unit ball is unbounded, flat or not symmetric."""


class UnsupportedFamilyError(CarnotLabError, ValueError):
    """Closed form requested outside the family where it is known."""


class PreconditionError(CarnotLabError, ValueError):
    """A quantitative precondition (height, tube distance, ...) fails."""


class DegenerateTupleError(CarnotLabError, ValueError):
    """Tuple of vectors is (numerically) linearly dependent."""


class NotInSpanError(CarnotLabError, ValueError):
    """Vector has a residual outside the span of a tuple."""

    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


class OptimizerInfeasibleError(CarnotLabError, RuntimeError):
    """No restart reached the target within the feasibility tolerance."""

    def __init__(self, msg, best_residual):
        super().__init__(msg)
        self.best_residual = best_residual


class CertificateError(CarnotLabError, RuntimeError):
    """No tuple of curve points with the required minimal height was found."""

    def __init__(self, msg, achieved):
        super().__init__(msg)
        self.achieved = achieved


class ConfigError(CarnotLabError, ValueError):
    """Malformed or inconsistent configuration."""
