"""Exception types shared across the package.

Every error carries a ``category`` string so command-line and service
layers can emit machine-readable reports without inspecting types.
"""

from __future__ import annotations

__all__ = [
    "TvTomoError",
    "ValidationError",
    "FormatError",
    "CapacityError",
    "NumericalError",
]


class TvTomoError(Exception):
    """Base class for package errors."""

    category = "error"


class ValidationError(TvTomoError):
    """Invalid argument, configuration value, or domain violation."""

    category = "validation"


class FormatError(TvTomoError):
    """Malformed or inconsistent file content.

    ``field`` names the offending header key or payload section.
    """

    category = "format"

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class CapacityError(TvTomoError):
    """A sampling or placement budget was exhausted."""

    category = "capacity"


class NumericalError(TvTomoError):
    """Non-finite or otherwise unusable numerical state."""

    category = "numerical"

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration
