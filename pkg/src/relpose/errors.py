"""Exception hierarchy."""


class RelposeError(Exception):
    """Base class for all errors raised by this package."""


class NonSkewInput(RelposeError, ValueError):
    pass


class NonUnitInput(RelposeError, ValueError):
    pass


# Bearing-specific alias kept for readability at call sites in the observer.
NonUnitBearing = NonUnitInput


class DegenerateRange(RelposeError, ValueError):
    """Bearing requested while the two bodies coincide."""


class NonPositiveP(RelposeError, ArithmeticError):
    """Riccati matrix lost positive definiteness (usually dt too large)."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class SingularGamma(RelposeError, ArithmeticError):
    pass


class InsufficientTrace(RelposeError, ValueError):
    """A recorded trace does not cover the requested interval."""


class SingularLambdaPi(RelposeError, ArithmeticError):
    """The bearing projector integral is not invertible on the window."""


class LeadingBlockSingular(RelposeError, ArithmeticError):
    pass


class ConfigError(RelposeError, ValueError):
    pass
