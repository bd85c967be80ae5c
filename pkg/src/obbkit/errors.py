"""Exception hierarchy shared across the toolkit.

The CLI maps these onto its exit-code contract: ConfigError -> 1,
DataError / ParseError (strict mode) -> 2, anything unexpected -> 3.
"""

from __future__ import annotations


class ObbkitError(Exception):
    """Base class for all toolkit errors."""


class GeometryError(ObbkitError):
    """Invalid geometric input (non-finite coordinates, degenerate operands)."""


class ConfigError(ObbkitError):
    """Invalid configuration or command-line usage."""


class DataError(ObbkitError):
    """Input data violates the format contract (fatal in strict mode)."""


class ParseError(DataError):
    """A single record failed to parse; carries its line number."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
