"""Exception hierarchy shared across the package.

The CLI maps ConfigError to exit code 2 and NumericsError to exit code 3.
"""


class L96ParamError(Exception):
    """Base class for all package errors."""


class ConfigError(L96ParamError):
    """Invalid configuration or inconsistent inputs (shapes, parameter ranges)."""


class NumericsError(L96ParamError):
    """Numerical failure: non-finite values, non-convergence, degenerate solves."""


class BlowupError(NumericsError):
    """Trajectory left the guarded region; carries the last valid time."""

    def __init__(self, message, last_valid_time=None):
        super().__init__(message)
        self.last_valid_time = last_valid_time
