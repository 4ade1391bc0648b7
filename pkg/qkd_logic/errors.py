####################################
#        Errors : mcfqkd           #
####################################

from typing import Optional


class McfQkdError(Exception):
    """Base exception for planner / simulator errors"""
    pass


class DomainError(McfQkdError, ValueError):
    """Input outside the domain of an operation"""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field

    def __reduce__(self):
        return self.__class__, (str(self), self.field)


class DegenerateCalibrationError(DomainError):
    """A calibration group carries no usable counts"""
    pass


class CapacityError(DomainError):
    """Traffic demand does not fit the grid"""

    def __init__(self, message: str, shortfall: int):
        super().__init__(message, field="classical")
        self.shortfall = shortfall

    def __reduce__(self):
        return self.__class__, (str(self), self.shortfall)


class CalibrationFailure(McfQkdError):
    """Baseline calibration found no solution in the physical ranges"""
    pass


class ConfigParseError(McfQkdError):
    """Malformed plan, demand, model, measurement or run config file"""

    def __init__(self, message: str, path: Optional[str] = None, field: Optional[str] = None, line: Optional[int] = None):
        location = path or "<input>"
        if line is not None:
            location = f"{location}:{line}"
        if field is not None:
            location = f"{location} [{field}]"
        super().__init__(f"{location}: {message}")
        self.path = path
        self.field = field
        self.line = line

    def __reduce__(self):
        return _rebuild_parse_error, (str(self), self.path, self.field, self.line)


class SweepPointError(McfQkdError):
    """A sweep point failed; carries the point coordinates"""

    def __init__(self, x: float, variant: str, cause: Exception):
        super().__init__(f"sweep point x={x:g} variant={variant}: {cause}")
        self.x = x
        self.variant = variant
        self.cause = cause

    def __reduce__(self):
        return self.__class__, (self.x, self.variant, self.cause)


def _rebuild_parse_error(message, path, field, line):
    # the stored message already carries the location prefix
    error = ConfigParseError.__new__(ConfigParseError)
    McfQkdError.__init__(error, message)
    error.path, error.field, error.line = path, field, line
    return error
