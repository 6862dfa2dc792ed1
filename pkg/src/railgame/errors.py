"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: scenario/config/usage
problems exit 1, per-period infeasibility exits 2.
"""

from __future__ import annotations


class RailgameError(Exception):
    """Base class for all package errors."""


class SchemaError(RailgameError):
    """A required CSV column is missing or the header cannot be mapped."""


class ValidationError(RailgameError):
    """One or more data rows violate an invariant (reported with line numbers)."""

    def __init__(self, message: str, rows: list[tuple[int, str]] | None = None):
        super().__init__(message)
        self.rows = rows or []


class ConflictError(RailgameError):
    """Two records claim overlapping time intervals for the same station."""


class CoverageError(RailgameError):
    """A query window extends over time the demand profile does not cover."""

    def __init__(self, message: str, gaps: list[tuple[object, float, float]] | None = None):
        super().__init__(message)
        self.gaps = gaps or []


class DegenerateDemandError(RailgameError):
    """Total traffic is zero; the leader problem has no meaningful optimum."""


class InfeasibleScenarioError(RailgameError):
    """No frequency satisfies the load-factor band inside the headway bounds."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class ConvergenceError(RailgameError):
    """Best-response iteration did not converge; carries the visited frequencies."""

    def __init__(self, message: str, trajectory: list[float]):
        super().__init__(message)
        self.trajectory = trajectory


class ScenarioConfigError(RailgameError):
    """Scenario file is missing a key or holds an out-of-range value."""
