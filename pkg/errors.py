"""Exception types shared by every stage. Each maps to a CLI exit code."""


class ForecastError(Exception):
    """Base class for all errors raised by the forecasting toolkit."""

    exit_code = 1


class ValidationError(ForecastError, ValueError):
    """A configuration value, argument or precondition is out of range."""

    exit_code = 1


class DataError(ForecastError, ValueError):
    """Input data could not be parsed or is unusable (gaps, too short...)."""

    exit_code = 2


class NumericalError(ForecastError, ArithmeticError):
    """A numerical routine failed (singular system, zero variance...)."""

    exit_code = 3


class StageError(ForecastError):
    """Wraps an error raised inside a pipeline stage and records the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"(E) stage '{stage}' failed: {str(cause).removeprefix('(E) ')}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)
