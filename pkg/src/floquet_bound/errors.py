"""Exception hierarchy shared by all pipeline stages."""


class FloquetBoundError(Exception):
    """Base class for domain errors raised by this package."""


class InvalidParameterError(FloquetBoundError, ValueError):
    pass


class IntegrationFailure(FloquetBoundError):
    """Step size underflow during adaptive integration."""

    def __init__(self, message, t_fail):
        super().__init__(f"{message} (t = {t_fail:.10g})")
        self.t_fail = t_fail


class OrbitNotFoundError(FloquetBoundError):
    pass


class NoReturnError(OrbitNotFoundError):
    pass


class UnsupportedSpectrumError(FloquetBoundError):
    """Complex or repeated nontrivial multipliers."""


class NumericRangeError(FloquetBoundError):
    pass


class InstabilityError(FloquetBoundError):
    """A PAR model with |lambda| >= 1 has no stationary variance."""


class DegenerateCoefficientError(FloquetBoundError):
    pass


class SectionPlacementError(FloquetBoundError):
    pass


class TrajectoryEscapeError(FloquetBoundError):
    def __init__(self, message, t_escape):
        super().__init__(message)
        self.t_escape = t_escape


class CrossingSequenceError(FloquetBoundError):
    """A section was skipped during one revolution (cycle slip)."""

    def __init__(self, message, revolution):
        super().__init__(f"{message} (revolution {revolution})")
        self.revolution = revolution


class InsufficientDataError(FloquetBoundError):
    pass


class DegenerateDataError(FloquetBoundError):
    pass


class ExperimentIntegrityError(FloquetBoundError):
    pass
