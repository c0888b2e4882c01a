"""Exception hierarchy. Each category maps to a stable CLI exit code."""

from __future__ import annotations


class FedKanError(Exception):
    exit_code = 1


class ConfigError(FedKanError, ValueError):
    """Invalid configuration or argument values."""

    exit_code = 2


class DataError(FedKanError, ValueError):
    """Malformed, missing or degenerate input data."""

    exit_code = 3


class IntegrityError(DataError):
    """Checkpoint manifest and payload disagree."""


class NumericError(FedKanError, ArithmeticError):
    """A NaN or infinity was produced."""

    exit_code = 4


class DimensionError(FedKanError, ValueError):
    """Operand shapes are incompatible."""

    def __init__(self, message: str, *shapes: tuple[int, ...]):
        if shapes:
            message = f"{message}: " + " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(message)
        self.shapes = shapes
