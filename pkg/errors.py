"""Exception hierarchy shared by every module.

Each exception carries the process exit code the command line maps it to:
2 for anything that rejects an input, 3 for theorem checks that cannot
produce a passing result.
"""


class SbsError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ValidationError(SbsError):
    """Input, model or precondition rejected."""

    exit_code = 2


class TheoremCheckError(SbsError):
    """A verification run could not reach a passing verdict."""

    exit_code = 3


# mdp_core

class NonStochasticRow(ValidationError):
    pass


class RewardOutOfBounds(ValidationError):
    pass


class BadDiscount(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class EnumerationTooLarge(ValidationError):
    pass


# distortion

class NonEvaluable(ValidationError):
    pass


class InvalidParameter(ValidationError):
    pass


class CertificateFailed(ValidationError):
    """Distortion model failed one or more shape constraints.

    Args:
        message (str): Human readable summary
        certificate (Certificate, optional): The failing certificate, kept so
            callers can report witness points.
    """

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class FlatRegionTooLarge(ValidationError):
    pass


# perception

class NonInjectiveReward(ValidationError):
    pass


class EmptySample(ValidationError):
    pass


class DuplicateState(ValidationError):
    pass


# blackswan

class NoIntersection(ValidationError):
    pass


class EventOutOfRange(ValidationError):
    pass


# verify

class AssumptionViolated(ValidationError):
    pass


class EmptyBlackSwanSet(ValidationError):
    pass


class InfeasibleDelta(ValidationError):
    pass


class ReachabilityViolated(ValidationError):
    pass


class SearchBudgetExhausted(TheoremCheckError):
    pass
