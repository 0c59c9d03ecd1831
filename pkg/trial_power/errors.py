"""Exception hierarchy shared by the library, the CLI and the MCP tools.

Each failure class maps onto one CLI exit code (see ``exit_code_for``).
"""
from __future__ import annotations

from typing import Optional, Sequence

__all__ = [
    "PowerAnalysisError",
    "ConfigError",
    "DomainError",
    "RankDeficiencyError",
    "AccuracyError",
    "UnreachableTargetError",
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_DOMAIN",
    "EXIT_ACCURACY",
    "EXIT_UNREACHABLE",
    "exit_code_for",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DOMAIN = 3
EXIT_ACCURACY = 4
EXIT_UNREACHABLE = 5


class PowerAnalysisError(Exception):
    """Base class for every error raised by trial_power."""


class ConfigError(PowerAnalysisError):
    """The design document could not be read, parsed or matched to the schema."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class DomainError(PowerAnalysisError, ValueError):
    """An input lies outside the domain of the requested computation."""

    line: Optional[int] = None

    def at_line(self, line: Optional[int]) -> "DomainError":
        """Anchor the error to a line of the design document it came from."""
        if line is not None and self.line is None:
            self.line = line
            self.args = (f"line {line}: {self.args[0] if self.args else ''}",) + self.args[1:]
        return self


class RankDeficiencyError(DomainError):
    """A variance matrix or least-squares design is singular."""

    def __init__(self, message: str, columns: Sequence[str] = ()) -> None:
        self.columns = tuple(columns)
        if self.columns:
            message = f"{message} (offending: {', '.join(self.columns)})"
        super().__init__(message)


class AccuracyError(PowerAnalysisError, ArithmeticError):
    """Numerical integration failed to reach the requested tolerance."""

    def __init__(self, message: str, best_estimate: float, error_estimate: float) -> None:
        self.best_estimate = best_estimate
        self.error_estimate = error_estimate
        super().__init__(
            f"{message} (best estimate {best_estimate:.10f}, "
            f"error estimate {error_estimate:.2e})"
        )


class UnreachableTargetError(PowerAnalysisError):
    """The requested power cannot be reached below the cell-size cap."""

    def __init__(self, target: float, cap: int, power_at_cap: float) -> None:
        self.target = target
        self.cap = cap
        self.power_at_cap = power_at_cap
        super().__init__(
            f"target power {target:.4f} not reached with cell multiplier up to {cap} "
            f"(power there: {power_at_cap:.6f})"
        )


def exit_code_for(exc: BaseException) -> int:
    """Map an exception onto the CLI exit code for its failure class."""
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, UnreachableTargetError):
        return EXIT_UNREACHABLE
    if isinstance(exc, AccuracyError):
        return EXIT_ACCURACY
    if isinstance(exc, DomainError):
        return EXIT_DOMAIN
    raise exc
