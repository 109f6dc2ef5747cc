"""Exception hierarchy shared by all modules."""


class OODQCDError(Exception):
    """Base class for every error raised by this package."""


class InvalidDistribution(OODQCDError, ValueError):
    pass


class TooFewPoints(OODQCDError, ValueError):
    pass


class DegenerateData(OODQCDError, ValueError):
    pass


class SteppedAfterAlarm(OODQCDError, RuntimeError):
    """A detector was stepped after it had already raised an alarm."""


class ZeroSpread(OODQCDError, ArithmeticError):
    """The Z-score window has zero standard deviation."""


class ConfigError(OODQCDError, ValueError):
    pass


class ParseError(OODQCDError, ValueError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class SchemaError(OODQCDError, ValueError):
    pass


class NonFiniteValue(ParseError):
    pass


class HorizonTooShort(OODQCDError, RuntimeError):
    pass


class Unreachable(OODQCDError, RuntimeError):
    """No threshold in the search bracket reaches the requested MTFA."""
