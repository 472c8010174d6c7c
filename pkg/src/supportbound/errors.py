"""Exception types shared across the package."""


class SupportBoundError(Exception):
    """Base class for every domain error raised by this package."""


class DimensionMismatch(SupportBoundError, ValueError):
    pass


class RankDeficient(SupportBoundError, ValueError):
    """A column submatrix is not of full column rank."""

    def __init__(self, message, support=None):
        super().__init__(message)
        self.support = support


class OddDof(SupportBoundError, ValueError):
    pass


class OddM(SupportBoundError, ValueError):
    pass


class BetaOutOfRange(SupportBoundError, ValueError):
    pass


class InvalidDims(SupportBoundError, ValueError):
    pass


class Infeasible(SupportBoundError, ValueError):
    pass


class CapExceeded(SupportBoundError, ValueError):
    pass


class SameSupport(SupportBoundError, ValueError):
    pass


class DegenerateSubspace(SameSupport):
    """The noiseless observation also lies in an alternative subspace."""


class NoAlternativeSupport(SupportBoundError, ValueError):
    pass


class SnrTooLow(SupportBoundError, ValueError):
    pass


class InvalidParameter(SupportBoundError, ValueError):
    """Generic precondition violation on a scalar parameter."""


class IndistinguishableWarning(UserWarning):
    """Some alternative subspace contains the noiseless observation."""
