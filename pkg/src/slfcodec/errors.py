"""Exception hierarchy.

Every error carries a short machine-readable ``category`` used by the CLI
when it reports failures on a single line.
"""

from __future__ import annotations


class SlfError(Exception):
    category = "error"


class InvalidArgument(SlfError, ValueError):
    category = "invalid-argument"


class OutOfBounds(InvalidArgument, IndexError):
    category = "out-of-bounds"


class NumericalFailure(SlfError, ArithmeticError):
    category = "numerical-failure"

    def __init__(self, message: str, point_index: int | None = None):
        if point_index is not None:
            message = f"{message} (point {point_index})"
        super().__init__(message)
        self.point_index = point_index


class CorruptStream(SlfError, ValueError):
    category = "corrupt-stream"


class UnsupportedStream(CorruptStream):
    category = "unsupported-stream"


class ConfigError(SlfError, ValueError):
    category = "config-error"

    def __init__(self, message: str, field: str | None = None):
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field
