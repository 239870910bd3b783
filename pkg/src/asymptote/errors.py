"""Exception hierarchy shared by all modules."""


class AsymptoteError(Exception):
    """Base class for every error raised by the package."""


class DSLSyntaxError(AsymptoteError, ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownIdentifier(DSLSyntaxError):
    pass


class IndexOutOfRange(DSLSyntaxError):
    pass


class DomainError(AsymptoteError, ArithmeticError):
    """Evaluation left the domain of an operation (log of non-positive, x/0, ...)."""

    def __init__(self, message, subexpression=None):
        if subexpression is not None:
            message = f"{message} in '{subexpression}'"
        super().__init__(message)
        self.subexpression = subexpression


class SingularJacobian(AsymptoteError, ArithmeticError):
    pass


class NonConvergentTail(AsymptoteError):
    pass


class ThresholdNotFound(AsymptoteError):
    pass


class NoConvergence(AsymptoteError):
    pass


class BallEscape(AsymptoteError):
    pass


class StepUnderflow(AsymptoteError):
    pass


class DomainExit(AsymptoteError):
    pass


class ProblemFileError(AsymptoteError, ValueError):
    pass


class ConditionsNotMet(AsymptoteError):
    """The fitted exponents do not satisfy the sufficient conditions."""
