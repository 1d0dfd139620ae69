"""Exception hierarchy shared across the package."""

from __future__ import annotations


class PararealError(Exception):
    """Base class for every error raised by this package."""


# numerical failures (CLI exit code 3)
class NumericalError(PararealError):
    pass


class PoleError(NumericalError):
    pass


class DegreeOverflow(NumericalError):
    pass


class ToleranceNotMet(NumericalError):
    pass


class SingularTableau(NumericalError):
    pass


class SingularMatrix(NumericalError):
    pass


class NonDiagonalizableTableau(NumericalError):
    pass


class NewtonDiverged(NumericalError):
    def __init__(self, message: str, residuals: list[float] | None = None):
        super().__init__(message)
        self.residuals = residuals or []


class DivergentFactor(NumericalError):
    pass


class NoThreshold(NumericalError):
    def __init__(self, message: str, table: dict[int, float] | None = None):
        super().__init__(message)
        self.table = table or {}


class InsufficientData(NumericalError):
    pass


# input validation (CLI exit code 2)
class ConfigError(PararealError):
    pass


class DomainError(ConfigError, ValueError):
    pass


class UnknownScheme(ConfigError, KeyError):
    def __str__(self) -> str:  # KeyError repr-quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class MeshTooCoarse(ConfigError, ValueError):
    pass


# verification failures (CLI exit code 4)
class VerificationError(PararealError):
    pass


class OrderMismatch(VerificationError):
    pass
