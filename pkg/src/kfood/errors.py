"""Exception hierarchy shared across the package."""


class KFoodError(Exception):
    """Base class for all package errors."""


class InvalidEdge(KFoodError):
    pass


class DisconnectedGraph(KFoodError):
    pass


class EmptyInput(KFoodError):
    pass


class RangeExhausted(KFoodError):
    pass


class ParseError(KFoodError):
    """Malformed document. ``location`` names the offending path or line."""

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{message} (at {location})"
        super().__init__(message)


class SchemaVersionMismatch(ParseError):
    pass


class NonIntegralTravelTime(KFoodError):
    pass


class HorizonOverflow(KFoodError):
    pass


class InvalidParameter(KFoodError):
    pass


class NumericalFailure(KFoodError):
    pass


class UnknownVariable(KFoodError):
    pass


class ResidualTooLarge(KFoodError):
    pass


class GuardRailExceeded(KFoodError):
    pass
