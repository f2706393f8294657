"""Exception types shared across the package."""

from __future__ import annotations


class HipeError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(HipeError):
    """Operands whose dimensions must agree do not."""


class InvalidParameter(HipeError):
    """A configuration value violates its documented range."""


class IoError(HipeError):
    """A file is missing or cannot be read or written."""


class FormatError(HipeError):
    """A file was read but its encoding is unsupported (alpha channels,
    unknown extensions, unexpected bit depths)."""


class EmptySequence(HipeError):
    """An aggregate operation received no inputs."""


class ConvergenceFailure(HipeError):
    """The iterative solver exhausted its iteration budget.

    Carries the relative residual that was actually achieved and, when
    raised from the multi-scale pipeline, the 1-based index of the failing
    scale.
    """

    def __init__(self, message: str, residual: float, scale: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.scale = scale


class ParseError(HipeError):
    """A configuration file line could not be parsed or validated."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
