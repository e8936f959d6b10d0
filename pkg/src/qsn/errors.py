"""Exception types shared across the pipeline."""


class QSNError(Exception):
    """Base class for all package errors."""


class ConfigurationError(QSNError, ValueError):
    """Inconsistent shapes, parameters or artifacts."""


class NumericalError(QSNError, FloatingPointError):
    """A computation produced non-finite values.

    ``step`` is the time-step (or training iteration) at which the failure
    was detected, ``time`` the model time when meaningful.
    """

    def __init__(self, message, step=None, time=None, last_state=None):
        super().__init__(message)
        self.step = step
        self.time = time
        self.last_state = last_state


class DegenerateFeatureError(QSNError, ValueError):
    """A feature column has zero variance."""


class InsufficientDataError(QSNError, ValueError):
    """Not enough samples, rows or history for the requested operation."""
