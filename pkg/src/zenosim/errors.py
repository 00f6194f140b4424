"""Exception hierarchy.  CLI exit codes hang off these classes."""


class ZenoError(Exception):
    """Base class for all package errors."""


class ConfigError(ZenoError, ValueError):
    """Invalid parameters or configuration (exit code 2)."""


class NumericalError(ZenoError, RuntimeError):
    """A run cannot be carried out accurately (exit code 3)."""


class PhaseCapError(NumericalError):
    """Time step too coarse for the potential depth."""


class GridOverflowError(NumericalError):
    """Probability reached the edge of the grid or the grid cannot resolve the run."""


class LostTrajectoryError(NumericalError):
    """A collapse found (almost) no probability inside the window."""

    def __init__(self, survival: float, message: str | None = None):
        self.survival = survival
        super().__init__(message or f"trajectory lost: survival {survival:.3e} below 1e-12")


class FitError(ZenoError, ValueError):
    """Input data cannot be fitted by the requested family."""


class ConvergenceError(FitError):
    """The nonlinear fit did not converge (exit code 4)."""
