"""Exception types shared across the package."""


class ScpnmError(Exception):
    """Base class for all package errors."""


class ParameterError(ScpnmError, ValueError):
    """An argument is outside its documented domain."""


class DomainError(ScpnmError, ValueError):
    """A numerical routine was asked to work outside its valid domain."""


class RankError(ScpnmError, ValueError):
    """A matrix is (numerically) rank deficient where full rank is required."""


class FormatError(ScpnmError, ValueError):
    """A serialized file is malformed.

    ``offset`` is the byte offset (binary files) or line number (text files)
    where parsing failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class TrainingError(ScpnmError, RuntimeError):
    """Training diverged. ``report`` holds the progress made before failure."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
