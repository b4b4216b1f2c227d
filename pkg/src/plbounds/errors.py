"""Exception hierarchy shared by all modules."""


class PLBoundsError(Exception):
    """Base class for every error raised by this package."""


class PreconditionError(PLBoundsError, ValueError):
    pass


class DegreeOverflowError(PLBoundsError):
    pass


class BudgetExceededError(PLBoundsError):
    pass


class RootFindingError(PLBoundsError):
    pass


class UnresolvedClusterError(PLBoundsError):
    pass


class DomainError(PLBoundsError, ValueError):
    pass


class NewtonDivergenceError(PLBoundsError):
    pass


class UnresolvedTraceError(PLBoundsError):
    pass


class NoCommonLandingError(PLBoundsError):
    pass


class RegionError(PLBoundsError):
    pass


class NotAnAnnulusError(RegionError):
    pass


class StageFailure(PLBoundsError):
    """A pipeline stage failed; ``stage`` names it for the CLI exit report."""

    def __init__(self, stage, message):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.message = message
