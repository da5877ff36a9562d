"""Exception hierarchy shared across the package."""


class TWClustError(Exception):
    """Base class for all package errors."""


class DataError(TWClustError, ValueError):
    """Malformed or invalid input data (ragged rows, bad cells, short grids)."""


class ParameterError(TWClustError, ValueError):
    """An argument is outside its allowed domain."""


class SelectionError(TWClustError, RuntimeError):
    """A selection criterion could not produce a choice of k."""


class CalibrationError(SelectionError):
    """Slope-heuristic calibration failed.

    ``diagnostics`` carries the regression quantities that led to the failure.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
