"""
Errors Module

This module defines the exception hierarchy shared by all lab modules.
Every exception carries the process exit code the command-line front end
maps it to.
"""

from typing import Any, List, Optional, Tuple


class DgffLabError(RuntimeError):
    """Base class for all errors raised by the lab."""

    exit_code: int = 1


class ConfigError(DgffLabError, ValueError):
    """
    Raised when a run configuration is invalid.

    Collects every violation found, not only the first one.

    Args:
        violations: List of (line number or None, message) pairs.
    """

    exit_code = 1

    def __init__(self, violations: List[Tuple[Optional[int], str]]) -> None:
        self.violations = list(violations)
        super().__init__(self._format())

    def _format(self) -> str:
        lines = []
        for line, message in self.violations:
            prefix = f"line {line}: " if line is not None else ""
            lines.append(f"{prefix}{message}")
        return "Invalid configuration:\n  " + "\n  ".join(lines)


class ResourceCapError(DgffLabError):
    """Raised when a computation would exceed a configured resource cap."""

    exit_code = 2


class StatisticalGateError(DgffLabError):
    """Raised by verification runs when a statistical gate fails."""

    exit_code = 3

    def __init__(self, message: str, report: Optional[Any] = None) -> None:
        super().__init__(message)
        self.report = report


class DegenerateLatticeError(DgffLabError, ValueError):
    """Raised when a lattice is too small for the requested statistic."""


class EmptyConfigurationError(DgffLabError):
    """Raised when a point configuration has no atoms."""


class MatrixNotPositiveDefiniteError(DgffLabError):
    """Raised when a covariance matrix cannot be factorized even with jitter."""


class TruncationError(DgffLabError):
    """Raised when the truncated point process neglects too much mass."""


class EnumerationBudgetError(DgffLabError):
    """Raised when exact enumeration would exceed its outcome budget."""


class ExperimentError(DgffLabError):
    """
    Wraps a failure inside an experiment with the experiment's name.

    The exit code of the wrapped lab error is preserved.
    """

    def __init__(self, message: str, cause: Optional[BaseException] = None) -> None:
        super().__init__(message)
        if isinstance(cause, DgffLabError):
            self.exit_code = cause.exit_code
