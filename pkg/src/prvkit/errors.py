"""Exception types shared across the toolkit."""


class MonitorError(Exception):
    """Base class for every error raised by this package."""


class FormulaSyntaxError(MonitorError):
    """Raised when formula text cannot be parsed; carries the offending position."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class IntervalError(MonitorError):
    """Malformed temporal interval: negative bounds, lo > hi, or non-integer endpoints."""


class UnboundedFormulaError(MonitorError):
    """A future-time operator carries an unbounded interval where a bound is required."""


class UnboundPredicateError(MonitorError):
    """A formula atom has not been bound to a concrete predicate function."""


class SignalError(MonitorError):
    """Signal too short for the requested evaluation, or state dimension mismatch."""


class NormMismatchError(MonitorError):
    """Ball norm does not match the norm a predicate's Lipschitz constant was declared for."""


class NotInPositiveNormalForm(MonitorError):
    """An operation requiring negation-free input received a formula with Not nodes."""


class CalibrationError(MonitorError):
    """Invalid calibration input: delta outside (0,1), non-finite scores, or empty grids."""


class MetadataMismatch(MonitorError):
    """A verdict was requested with a region calibrated for different inputs."""


class HorizonError(MonitorError):
    """The requested operation needs a positive prediction horizon."""


class PredictionError(MonitorError):
    """Predictor misuse: horizon exceeded, prefix too short, or unknown trajectory id."""


class DataFormatError(MonitorError):
    """A trajectory, prediction-table, or artifact file does not match its schema."""
