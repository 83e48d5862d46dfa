"""
policy.py

Selection policies u = pi(x) from the contracted feasible set K_gamma(x).
Every policy returns a point of K_gamma(x); none of them is required to be
continuous in x.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np

from shared.constants import CONTAINS_TOL, ErrorMessages, PolicyEvents, PolicyNames, SolveStatus
from shared.exceptions import DimensionMismatch, EmptyFeasibleSet, InvalidParameter, SolverFailure
from shared.logger import get_logger
from invariance.barrier import SystemDynamics
from invariance.feasible_map import SafetySpec, build_K
from invariance.geometry import Polytope, chebyshev, contains, erode
from invariance.safety_program import NominalControl, ObjectiveChoice, solve_safety_program
from invariance.solver import LinearProgram, QuadraticProgram, solve_lp, solve_qp

logger = get_logger(__name__)


@dataclass(frozen=True)
class ChebyshevCenter:
    name = PolicyNames.CHEBYSHEV_CENTER


@dataclass(frozen=True)
class QPTracking:
    """argmin over K_gamma(x) of 1/2 (u - u_nom)^T diag(w) (u - u_nom)."""

    u_nom: Union[np.ndarray, NominalControl]
    weights: Optional[np.ndarray] = None
    name = PolicyNames.QP_TRACKING

    def nominal(self, x) -> np.ndarray:
        if isinstance(self.u_nom, NominalControl):
            return self.u_nom(x)
        return np.atleast_1d(np.asarray(self.u_nom, dtype=float))


@dataclass(frozen=True)
class LPVertex:
    c: np.ndarray
    name = PolicyNames.LP_VERTEX


@dataclass(frozen=True)
class RotatingVertex:
    """Cycles through `costs`, switching every `period` steps."""

    costs: Tuple[np.ndarray, ...]
    period: int = 1
    name = PolicyNames.ROTATING_VERTEX

    def __post_init__(self):
        costs = tuple(np.atleast_1d(np.asarray(c, dtype=float)) for c in self.costs)
        if len(costs) < 2:
            raise InvalidParameter("rotating vertex policy needs at least two costs")
        if int(self.period) < 1:
            raise InvalidParameter(f"period must be at least 1, got {self.period}")
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "period", int(self.period))

    def cost_index(self, step_index: int) -> int:
        return (step_index // self.period) % len(self.costs)


@dataclass(frozen=True)
class SafetyProgram:
    objective: ObjectiveChoice
    name = PolicyNames.SAFETY_PROGRAM


Policy = Union[ChebyshevCenter, QPTracking, LPVertex, RotatingVertex, SafetyProgram]


@dataclass
class Selection:
    u: np.ndarray
    events: List[str] = field(default_factory=list)


def contracted_set(spec: SafetySpec, sys: SystemDynamics, x, gamma: float) -> Tuple[Polytope, np.ndarray]:
    """K_gamma(x) and its Chebyshev center; raises EmptyFeasibleSet when empty."""
    K_gamma = erode(build_K(spec, sys, x).K, gamma)
    cheb = chebyshev(K_gamma)
    if not cheb.feasible:
        raise EmptyFeasibleSet(
            ErrorMessages.EMPTY_FEASIBLE_SET.format(
                x=np.round(np.asarray(x, dtype=float), 12).tolist(), gamma=gamma
            )
        )
    return K_gamma, cheb.center


def _optimal_point(outcome, what: str) -> np.ndarray:
    if outcome.status == SolveStatus.OPTIMAL:
        return outcome.point
    raise SolverFailure(f"{what} ended with status {outcome.status}", outcome.status)


def _check_cost(c, m: int) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.shape != (m,):
        raise DimensionMismatch(f"cost vector must have {m} entries, got {c.shape}")
    return c


def select(
    policy: Policy,
    spec: SafetySpec,
    sys: SystemDynamics,
    x,
    step_index: int,
    gamma: float,
) -> Selection:
    """Control for state x at step `step_index`, with any policy events raised on the way."""
    K_gamma, center = contracted_set(spec, sys, x, gamma)
    m = spec.m
    events: List[str] = []

    if isinstance(policy, ChebyshevCenter):
        u = center
    elif isinstance(policy, QPTracking):
        u_nom = policy.nominal(x)
        if u_nom.shape != (m,):
            raise DimensionMismatch(f"nominal control must have {m} entries, got {u_nom.shape}")
        w = np.ones(m) if policy.weights is None else np.atleast_1d(np.asarray(policy.weights, dtype=float))
        if w.shape != (m,) or np.any(w <= 0):
            raise InvalidParameter("tracking weights must be positive, one per control")
        outcome = solve_qp(QuadraticProgram(Q=np.diag(w), c=-w * u_nom, A=K_gamma.A, b=K_gamma.b))
        u = _optimal_point(outcome, "tracking QP")
    elif isinstance(policy, LPVertex):
        outcome = solve_lp(LinearProgram(c=_check_cost(policy.c, m), A=K_gamma.A, b=K_gamma.b))
        u = _optimal_point(outcome, "vertex LP")
    elif isinstance(policy, RotatingVertex):
        index = policy.cost_index(step_index)
        if step_index > 0 and index != policy.cost_index(step_index - 1):
            events.append(PolicyEvents.COST_SWITCH)
        c = _check_cost(policy.costs[index], m)
        outcome = solve_lp(LinearProgram(c=c, A=K_gamma.A, b=K_gamma.b))
        u = _optimal_point(outcome, "rotating vertex LP")
    elif isinstance(policy, SafetyProgram):
        result = solve_safety_program(spec, sys, x, policy.objective)
        if result.optimal and contains(K_gamma, result.v, CONTAINS_TOL):
            u = result.v
        else:
            logger.warning(
                f"safety program control outside K_gamma at step {step_index} "
                f"(status {result.status}); falling back to the Chebyshev center"
            )
            events.append(PolicyEvents.GAMMA_FALLBACK)
            u = center
    else:
        raise InvalidParameter(f"unknown policy {policy!r}")

    if not contains(K_gamma, u, CONTAINS_TOL):
        logger.warning(
            f"{policy.name} returned a control outside K_gamma at step {step_index}; "
            "using the Chebyshev center"
        )
        events.append(PolicyEvents.GAMMA_FALLBACK)
        u = center
    return Selection(u=np.asarray(u, dtype=float), events=events)


def select_control(
    policy: Policy,
    spec: SafetySpec,
    sys: SystemDynamics,
    x,
    step_index: int,
    gamma: float,
) -> np.ndarray:
    return select(policy, spec, sys, x, step_index, gamma).u


def make_policy(name: str, **options) -> Policy:
    """Build a policy from its catalog name (see PolicyNames)."""
    if name == PolicyNames.CHEBYSHEV_CENTER:
        return ChebyshevCenter()
    if name == PolicyNames.QP_TRACKING:
        return QPTracking(u_nom=options["u_nom"], weights=options.get("weights"))
    if name == PolicyNames.LP_VERTEX:
        return LPVertex(c=np.asarray(options["c"], dtype=float))
    if name == PolicyNames.ROTATING_VERTEX:
        return RotatingVertex(costs=tuple(options["costs"]), period=options.get("period", 1))
    if name == PolicyNames.SAFETY_PROGRAM:
        return SafetyProgram(objective=options["objective"])
    raise InvalidParameter(f"unknown policy '{name}'; choose from {PolicyNames.ALL}")
