"""Exception types shared across the package."""


class GreedyPdeError(Exception):
    """Base class for solver-specific failures."""


class UnsupportedDerivativeError(GreedyPdeError):
    """A derivative order beyond what the activation supports was requested."""


class NumericError(GreedyPdeError):
    """A non-finite value appeared during evaluation.

    Carries the offending sample index and point when known.
    """

    def __init__(self, message, index=None, point=None):
        super().__init__(message)
        self.index = index
        self.point = point


class CoefficientViolationError(GreedyPdeError):
    """A PDE coefficient failed its positivity bound at a sample point."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class UnsupportedDomainError(GreedyPdeError):
    """The requested domain shape is not supported by this constructor."""


class RankDeficientError(GreedyPdeError):
    """A least-squares projection could not be stabilized."""


class DegenerateDictionaryError(GreedyPdeError):
    """The dictionary search produced no usable candidate."""
