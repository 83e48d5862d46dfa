"""
exceptions.py

Error hierarchy for the invariance toolkit. Library code raises these; the
runner converts them into exit codes.
"""

from typing import Any, Dict, List, Optional, Sequence


class InvarianceError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(InvarianceError):
    pass


class InvalidParameter(InvarianceError):
    pass


class EmptyPolytope(InvarianceError):
    pass


class UnboundedRadius(InvarianceError):
    pass


class UnboundedDirection(InvarianceError):
    pass


class UnsupportedBarrierKind(InvarianceError):
    pass


class DegenerateGradient(InvarianceError):
    pass


class EmptyFeasibleSet(InvarianceError):
    pass


class SampleOutsideOmega(InvarianceError):
    """Raised when a sampled state has an empty-interior feasible set."""

    def __init__(self, message: str, x: Sequence[float], radius: Optional[float]):
        super().__init__(message)
        self.x = list(x)
        self.radius = radius


class PreconditionViolated(InvarianceError):
    """Raised when an operation's documented precondition does not hold."""

    def __init__(self, message: str, condition: str):
        super().__init__(message)
        self.condition = condition


class SolverFailure(InvarianceError):
    """Raised when an embedded solver ends without an optimal point."""

    def __init__(self, message: str, status: str, step: Optional[int] = None):
        super().__init__(message)
        self.status = status
        self.step = step

    def at_step(self, step: int) -> "SolverFailure":
        return SolverFailure(f"step {step}: {self}", self.status, step)


class ScenarioError(InvarianceError):
    """Scenario file could not be parsed or validated."""

    def __init__(self, message: str, diagnostics: Optional[List[Dict[str, Any]]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []
