"""Exception hierarchy for kp-spectral."""
from typing import Optional


class KPError(Exception):
    """Base class for all kp-spectral errors."""


class ConfigurationError(KPError, ValueError):
    """Invalid grid, model parameters, run configuration or array shapes."""


class NumericalOverflowError(KPError, ArithmeticError):
    """A field or intermediate quantity stopped being finite."""

    def __init__(self, message: str, step_index: Optional[int] = None, t: Optional[float] = None):
        super().__init__(message)
        self.step_index = step_index
        self.t = t


class UndefinedDeltaError(KPError, ZeroDivisionError):
    """Relative mass conservation requested against a zero initial mass."""


class SnapshotFormatError(KPError, ValueError):
    """Snapshot file with wrong magic, corrupt header or payload size mismatch."""


class FitError(KPError, ValueError):
    """Lump fit requested for a peak that cannot be a lump."""


class MemoryBudgetError(KPError, MemoryError):
    """Run refused because its memory estimate exceeds the configured budget."""
