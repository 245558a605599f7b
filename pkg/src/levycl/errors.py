"""Exception hierarchy shared by all modules."""


class LevyclError(Exception):
    """Base class for library errors."""


class DimensionMismatchError(LevyclError, ValueError):
    pass


class InvalidInitialDataError(LevyclError, ValueError):
    pass


class InvalidParameterError(LevyclError, ValueError):
    pass


class NumericalIntegrationError(LevyclError, RuntimeError):
    pass


class UnsupportedMeasureError(LevyclError, ValueError):
    pass


class AlignmentError(LevyclError, ValueError):
    pass


class ConfigError(LevyclError, ValueError):
    """Invalid run configuration. ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class BlowUpError(LevyclError, RuntimeError):
    """Non-finite values produced by a time step."""

    def __init__(self, message, step=None, seed=None):
        super().__init__(message)
        self.step = step
        self.seed = seed


class StabilityViolationError(BlowUpError):
    """State exceeded the guard multiple of the L-infinity bound."""


class FitError(LevyclError, ValueError):
    pass
