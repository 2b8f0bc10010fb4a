"""Exception hierarchy shared by all modules.

Two families matter to callers. ``ConfigError`` subclasses signal that an
input violated a documented precondition; ``NumericFailure`` subclasses
signal that a well-posed computation could not meet its tolerance.  The
command line maps them to exit codes 1 and 2 respectively.
"""


class ConfigError(ValueError):
    """An argument violates a documented precondition."""


class DomainError(ConfigError):
    """A scalar argument lies outside the domain of a function."""


class DegenerateInputError(ConfigError):
    """A player is exactly indifferent, or a selection rule hits a tie."""


class NumericFailure(RuntimeError):
    """A numerical routine could not reach the requested accuracy."""


class BracketError(NumericFailure):
    """The root finder was given endpoints with equal function signs."""


class QuadratureError(NumericFailure):
    """Adaptive quadrature exhausted its subdivision budget."""


class AmbiguityError(NumericFailure):
    """A probe probability is too close to 1/2 to decide a sign."""


class NonMonotoneError(NumericFailure):
    """An estimated CDF decreases by more than the allowed tolerance."""


class InversionError(NumericFailure):
    """A probability falls outside the range of an estimated CDF."""


class NoJumpError(NumericFailure):
    """The normalized derivative profile never crosses the detection band."""


class EmptyNeighborhoodError(NumericFailure):
    """A kernel query has no observations within the support radius."""
