"""Exception hierarchy. Each class maps to a CLI exit code."""


class NetmomError(Exception):
    exit_code = 1


class ConfigError(NetmomError, ValueError):
    exit_code = 1


class DataError(NetmomError, ValueError):
    exit_code = 2


class InsufficientHistoryError(DataError):
    pass


class ConvergenceError(NetmomError, RuntimeError):
    """Raised when an iterative solver stops before reaching its tolerance."""

    exit_code = 3

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual
