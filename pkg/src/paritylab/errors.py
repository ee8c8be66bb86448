class ParityLabError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(ParityLabError, ValueError):
    pass


class CapacityError(ParityLabError):
    """Exact enumeration requested above the configured dimension cap."""


class ScheduleError(ParityLabError, ValueError):
    pass


class NumericError(ParityLabError, ArithmeticError):
    pass


class SeparatorInfeasibleError(ParityLabError):
    """A staircase bucket ended up with too few matching neurons."""

    def __init__(self, r, found, needed):
        self.r = r
        self.found = found
        self.needed = needed
        super().__init__(
            f"separator infeasible: bucket r={r} has {found} matching neurons, needs {needed}"
        )


class IdxParseError(ParityLabError):
    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (byte offset {offset})")


class ConfigError(ParityLabError):
    pass
