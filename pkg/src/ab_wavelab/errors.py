"""Exception hierarchy.

Errors are split in two families so the command line can map them to exit
codes: ``ValidationError`` (bad input, exit 2) and ``NumericalError``
(a computation that cannot proceed, exit 3).
"""


class ABWaveError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(ABWaveError, ValueError):
    """Input violates a documented invariant."""


class NumericalError(ABWaveError, ArithmeticError):
    """A numerical procedure failed or left its validity regime."""


# geometry / input
class PointOnContour(ValidationError):
    pass


class EvaluationAtCenter(ValidationError):
    pass


class ContourIntersectsObstacle(ValidationError):
    pass


class BadBasis(ValidationError):
    pass


class DegenerateGeometry(ValidationError):
    pass


class OverlappingObstacles(ValidationError):
    pass


class SupportIntersectsObstacle(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None, column=None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


# numerical
class GrazingIncidence(NumericalError):
    pass


class TooManyReflections(NumericalError):
    pass


class FamilyCaustic(NumericalError):
    pass


class CausticError(FamilyCaustic):
    pass


class OutsideTube(NumericalError):
    pass


class SourceSingularity(NumericalError):
    pass


class NonconvergentTail(NumericalError):
    pass


class UnsupportedOrder(NumericalError):
    pass


class EdgeThroughFluxCenter(NumericalError):
    pass


class LinearSolveFailure(NumericalError):
    pass


class NormLossExceeded(NumericalError):
    pass


class ErrorBudgetExceeded(NumericalError):
    pass


class NoPathFound(NumericalError):
    pass


class InitialDataDegenerate(NumericalError):
    pass


class VanishingModulus(NumericalError):
    pass
