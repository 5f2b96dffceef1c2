"""Exception types shared across the library."""


class VmfuncError(Exception):
    """Base class for errors raised by this library."""


class DimensionMismatch(VmfuncError, ValueError):
    """Operands expect different coordinate dimensions."""


class DegenerateVariance(VmfuncError, ArithmeticError):
    """A variance appearing in a denominator is zero or numerically negligible."""


class MomentUnavailable(VmfuncError, ValueError):
    """A moment required by an exact formula has no available value."""


class NoAnalyticDerivative(VmfuncError, ValueError):
    """The functional has no analytic influence representation at this base."""


class SimplexViolation(VmfuncError, ValueError):
    """A frequency vector is not on the probability simplex."""


class EnumerationGuard(VmfuncError, ValueError):
    """An exact enumeration request exceeds the configured size guard."""


class ConfigError(VmfuncError, ValueError):
    """An experiment configuration failed validation."""
