"""Exception hierarchy.

Each top-level class carries the process exit code the CLI uses for it.
"""


class CqlqgError(Exception):
    exit_code = 5


class ValidationError(CqlqgError, ValueError):
    exit_code = 2

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class ParseError(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class OddDimension(ValidationError):
    pass


class OddChannelCount(ValidationError):
    pass


class OutputExceedsField(ValidationError):
    pass


class NotAntisymmetric(ValidationError):
    pass


class BadFeedthrough(ValidationError):
    pass


class InfeasibleError(CqlqgError):
    exit_code = 3


class DimensionDeficit(InfeasibleError):
    pass


class InfeasibleGains(InfeasibleError):
    pass


class NotFound(InfeasibleError):
    pass


class PRViolation(InfeasibleError):
    pass


class InstabilityError(CqlqgError):
    exit_code = 4


class NotHurwitz(InstabilityError):
    pass


class LostStability(InstabilityError):
    pass


class NumericalError(CqlqgError):
    exit_code = 5


class SingularSystem(NumericalError):
    pass


class SingularInput(NumericalError):
    pass


class SingularCcr(NumericalError):
    pass


class SingularTransform(NumericalError):
    pass


class ResonantSpectrum(NumericalError):
    pass


class InconsistentGramians(NumericalError):
    pass


class StaleGramians(NumericalError):
    pass


class NotPsd(NumericalError):
    pass


class BudgetExhausted(NumericalError):
    pass


class SingularThetaWarning(UserWarning):
    pass


class DataQualityWarning(UserWarning):
    pass
