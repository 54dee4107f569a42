"""Exception hierarchy.

``ConfigError`` and ``DataError`` subclasses map onto the CLI exit codes 1 and 2.
"""


class CandleBtError(Exception):
    """Base class for all package errors."""


class ConfigError(CandleBtError):
    pass


class DataError(CandleBtError):
    pass


class MalformedCandle(DataError):
    def __init__(self, which: str, candle=None):
        self.which = which
        self.candle = candle
        super().__init__(f"malformed candle ({which}): {candle!r}")


class NonPositiveTickSize(ConfigError):
    pass


class DegenerateOrder(CandleBtError):
    """Raised when an evaluator receives levels that violate its ordering precondition."""


class NotAPosition(CandleBtError):
    pass


class InconsistentOutcome(CandleBtError):
    pass


class RefinerUnavailable(ConfigError):
    pass


class InconsistentSubCandles(DataError):
    pass


class DataGap(DataError):
    pass


class ParseError(DataError):
    def __init__(self, row: int, reason: str):
        self.row = row
        self.reason = reason
        super().__init__(f"row {row}: {reason}")


class OffGridPrice(ParseError):
    pass


class NonMonotonicTimestamps(DataError):
    pass


class ScriptOutOfRange(DataError):
    pass


class OverlappingPositionRequest(CandleBtError):
    """Recorded (not raised) by the runner when an entry arrives while invested."""
