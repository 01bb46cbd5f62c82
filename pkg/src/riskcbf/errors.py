"""Exception hierarchy shared by the package."""

from __future__ import annotations


class RiskCbfError(Exception):
    """Base class for all package errors."""


class ValidationError(RiskCbfError, ValueError):
    """Invalid input data: bad shapes, out-of-range parameters, non-PD covariances."""


class MalformedProblemError(ValidationError):
    """A conic problem whose blocks do not match its variable space or cone sizes."""


class SolverError(RiskCbfError, RuntimeError):
    """The conic backend did not return a trustworthy optimum.

    ``solution`` holds the :class:`~riskcbf.conic.ConicSolution` (status and
    residuals) for diagnostics.
    """

    def __init__(self, message: str, solution=None):
        super().__init__(message)
        self.solution = solution


class InfeasibleError(SolverError):
    """The safety program has no feasible point (and no slack was allowed)."""


class SimulationAbort(RiskCbfError):
    """A closed-loop rollout stopped early; ``step`` is the failing time index."""

    def __init__(self, message: str, step: int, cause: Exception | None = None):
        super().__init__(f"step {step}: {message}")
        self.step = step
        self.cause = cause
