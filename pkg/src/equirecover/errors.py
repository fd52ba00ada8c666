"""Exception hierarchy shared by every equirecover module."""

from __future__ import annotations


class EquirecoverError(Exception):
    """Base class for all errors raised by equirecover."""


class ConfigurationError(EquirecoverError):
    """Invalid configuration values, files or missing inputs."""


class ShapeError(EquirecoverError, ValueError):
    """Array shapes do not match what a model or routine expects."""


class InputError(EquirecoverError, ValueError):
    """Input values are out of the accepted domain (non-finite, empty, too short)."""


class NumericError(EquirecoverError, ArithmeticError):
    """A computation produced non-finite values."""


class TrainingError(EquirecoverError):
    """Training diverged or could not run."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


class CollectionError(EquirecoverError):
    """Data collection failed too often to be trusted."""


class FormatError(EquirecoverError):
    """A serialized artifact is malformed."""
