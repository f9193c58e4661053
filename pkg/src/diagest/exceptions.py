"""Exception types raised across the package."""


class DiagestError(Exception):
    """Base class for all package errors."""


class DimensionError(DiagestError, ValueError):
    """A vector or matrix has the wrong shape."""


class MatrixFormatError(DiagestError, ValueError):
    """A matrix file could not be parsed or uses an unsupported variant."""


class PreconditionError(DiagestError, ValueError):
    """An input violates a documented precondition."""


class DegenerateProbeError(DiagestError, ArithmeticError):
    """A probe denominator underflowed; indicates a broken generator."""


class UnsupportedDistributionError(DiagestError, ValueError):
    """The requested operation is not defined for this probe distribution."""


class ConfigError(DiagestError, ValueError):
    """An algorithm configuration is inconsistent."""
