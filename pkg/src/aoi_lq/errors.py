"""Exception types raised by the solver, policy and simulation layers."""


class AoiLqError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(AoiLqError, ValueError):
    pass


class InvalidSpec(AoiLqError, ValueError):
    """A game parameter violates a symmetry/definiteness requirement."""


class NonFinite(AoiLqError, ValueError):
    pass


class NonPositiveStep(AoiLqError, ValueError):
    pass


class NoStabilizingSolution(AoiLqError, ArithmeticError):
    """The Riccati equation has no usable (stabilizing, PSD) solution."""


class CapacityExceeded(AoiLqError, ArithmeticError):
    pass


class TableExhausted(AoiLqError, ArithmeticError):
    """No threshold solves the implicit equation inside the age-cost table."""


class TruncationTooSmall(AoiLqError, ArithmeticError):
    pass


class NoConvergence(AoiLqError, ArithmeticError):
    pass


class DegenerateBracket(AoiLqError, ArithmeticError):
    pass


class Diverged(AoiLqError, ArithmeticError):
    pass


class ConfigMismatch(AoiLqError, ValueError):
    pass


# exit status 2 in the CLI
MATH_ERRORS = (
    NoStabilizingSolution,
    CapacityExceeded,
    TableExhausted,
    TruncationTooSmall,
    NoConvergence,
    DegenerateBracket,
    Diverged,
)
