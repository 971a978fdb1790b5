"""Exception hierarchy shared by all modules."""


class OtfsError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(OtfsError, ValueError):
    """Array shapes or sizes are inconsistent with the operation."""


class UnsupportedDimensionError(DimensionError):
    """The grid size MN is outside the supported Vandermonde classes."""


class ParameterError(OtfsError, ValueError):
    """A scalar parameter is out of its admissible range."""


class ContractViolation(OtfsError, ValueError):
    """An input violates a structural precondition (e.g. not Hermitian)."""


class DegenerateBasisError(OtfsError, ValueError):
    """BEM modeling frequencies coincide modulo 2*pi."""


class CapacityError(OtfsError):
    """The requested detector cannot be run within its candidate budget."""


class NumericalError(OtfsError, ArithmeticError):
    """A linear solve is too ill-conditioned to be trusted."""


class StatisticalValidityError(OtfsError):
    """Too few error events to support the requested estimate."""
