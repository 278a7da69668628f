"""Exception hierarchy. The CLI maps these onto exit codes."""


class FMFError(Exception):
    """Base class for all errors raised by the package."""


class InputError(FMFError, ValueError):
    """Bad user input: malformed files, invalid parameters, inconsistent data."""


class TimestampError(InputError):
    """Gaps, duplicates or misaligned timestamps.

    ``hours`` holds the offending timestamps so callers can report them.
    """

    def __init__(self, message, hours=()):
        super().__init__(message)
        self.hours = list(hours)


class CoverageError(TimestampError):
    """A series does not cover the span another series needs."""


class InvariantError(FMFError, RuntimeError):
    """An internal invariant was violated. Always a bug, never bad input."""
