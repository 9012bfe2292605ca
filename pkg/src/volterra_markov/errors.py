"""Exception types shared across the package."""

from __future__ import annotations


class VolterraMarkovError(Exception):
    """Base class for all package errors."""


class DomainError(VolterraMarkovError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class ConvergenceError(VolterraMarkovError, ArithmeticError):
    """An iterative evaluation stopped before reaching its tolerance."""

    def __init__(self, message: str, partial: float = float("nan"), bound: float = float("nan")):
        super().__init__(f"{message} (partial={partial!r}, bound={bound!r})")
        self.partial = partial
        self.bound = bound


class QuadratureError(ConvergenceError):
    """Adaptive quadrature failed to meet its tolerance."""

    def __init__(self, message: str, value: float = float("nan"), error: float = float("nan")):
        super().__init__(message, partial=value, bound=error)
        self.value = value
        self.error = error


class StepSizeError(VolterraMarkovError):
    """The discrete Volterra system has a (near) singular diagonal."""


class UnsupportedKernelError(VolterraMarkovError, TypeError):
    """The operation is not available for this kernel family."""


class SingularBlockError(VolterraMarkovError, ArithmeticError):
    """An observation covariance block cannot be inverted."""


class CovarianceError(VolterraMarkovError, ArithmeticError):
    """A covariance matrix is numerically indefinite."""


class SearchExhaustedError(VolterraMarkovError):
    """A certificate search found no configuration above the margin threshold."""

    def __init__(self, message: str, best_margin: float, best_tau: float | None = None):
        super().__init__(f"{message} (best margin {best_margin:.3e} at tau={best_tau})")
        self.best_margin = best_margin
        self.best_tau = best_tau


class InsufficientMassError(VolterraMarkovError):
    """Too few Monte Carlo paths satisfy the conditioning event."""

    def __init__(self, message: str, n_effective: int):
        super().__init__(f"{message} (n_effective={n_effective})")
        self.n_effective = n_effective


class SimulationError(VolterraMarkovError):
    """Model/kernel incompatibility or numerical blow-up during simulation."""


class ConfigError(VolterraMarkovError, ValueError):
    """Invalid run configuration."""


class DegenerateKernelError(VolterraMarkovError, ZeroDivisionError):
    """The kernel vanishes where a normalisation needs it to be positive."""


class SolutionOverflowError(VolterraMarkovError, OverflowError):
    """A deterministic solve left the floating-point range."""
