"""
safety_program.py

The per-state safety program over z = (v, delta_1, ..., delta_N):

    minimize   C(z)
    subject to A_u v <= b_u
               L_f h_i(x) + L_g h_i(x) v + delta_i h_i(x) <= 0,   i = 1..N
               0 <= delta_i <= DELTA_MAX

with C a feasibility (Chebyshev center), linear or tracking objective.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from shared.constants import (
    DELTA_MAX,
    FEASIBILITY_INTERIOR_FRACTION,
    FEASIBILITY_TOL,
    ErrorMessages,
    SolveStatus,
)
from shared.exceptions import (
    DimensionMismatch,
    InvalidParameter,
    PreconditionViolated,
    SolverFailure,
)
from shared.logger import get_logger
from invariance.barrier import SystemDynamics, eval_h, lie_derivatives
from invariance.feasible_map import SafetySpec, check_system
from invariance.geometry import Polytope, chebyshev, contains
from invariance.solver import (
    LinearProgram,
    QuadraticProgram,
    solve_lp,
    solve_qp,
)

logger = get_logger(__name__)


# ------------------------- Nominal controls ------------------------- #
@dataclass(frozen=True)
class NominalControl:
    """u_nom(x) = K x + k0; a constant nominal has K = 0."""

    K: np.ndarray
    k0: np.ndarray

    @classmethod
    def constant(cls, u: Sequence[float], n: int) -> "NominalControl":
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return cls(K=np.zeros((u.shape[0], n)), k0=u)

    @classmethod
    def linear(cls, K, k0=None) -> "NominalControl":
        K = np.atleast_2d(np.asarray(K, dtype=float))
        k0 = np.zeros(K.shape[0]) if k0 is None else np.atleast_1d(np.asarray(k0, dtype=float))
        if k0.shape[0] != K.shape[0]:
            raise DimensionMismatch(f"k0 has {k0.shape[0]} entries, K has {K.shape[0]} rows")
        return cls(K=K, k0=k0)

    def __call__(self, x) -> np.ndarray:
        return self.K @ np.asarray(x, dtype=float) + self.k0


# ------------------------- Objectives ------------------------- #
@dataclass(frozen=True)
class Feasibility:
    """Return the Chebyshev center of the lifted polytope."""


@dataclass(frozen=True)
class LinearCost:
    c: np.ndarray


@dataclass(frozen=True)
class Tracking:
    """1/2 ||v - u_nom||^2 + 1/2 sum_i w_i delta_i^2"""

    u_nom: Union[np.ndarray, NominalControl]
    weights: np.ndarray

    def nominal(self, x) -> np.ndarray:
        if isinstance(self.u_nom, NominalControl):
            return self.u_nom(x)
        return np.atleast_1d(np.asarray(self.u_nom, dtype=float))


ObjectiveChoice = Union[Feasibility, LinearCost, Tracking]


@dataclass(frozen=True)
class SafetyProgramResult:
    status: str
    v: Optional[np.ndarray] = None
    delta: Optional[np.ndarray] = None
    objective: float = float("nan")
    lifted_radius: Optional[float] = None

    @property
    def optimal(self) -> bool:
        return self.status == SolveStatus.OPTIMAL


def lifted_polytope(spec: SafetySpec, sys: SystemDynamics, x) -> Polytope:
    """Constraint polytope of the safety program in z = (v, delta)."""
    check_system(spec, sys)
    m, N = spec.m, spec.n_barriers
    U = spec.input_set
    rows = [np.hstack([U.A, np.zeros((U.n_rows, N))])]
    rhs = [U.b]
    barrier_A = np.zeros((N, m + N))
    barrier_b = np.zeros(N)
    for i, h in enumerate(spec.barriers):
        Lf, Lg = lie_derivatives(sys, h, x)
        barrier_A[i, :m] = Lg
        barrier_A[i, m + i] = eval_h(h, x)
        barrier_b[i] = -Lf
    rows.append(barrier_A)
    rhs.append(barrier_b)
    # 0 <= delta <= DELTA_MAX
    rows.append(np.hstack([np.zeros((N, m)), -np.eye(N)]))
    rhs.append(np.zeros(N))
    rows.append(np.hstack([np.zeros((N, m)), np.eye(N)]))
    rhs.append(np.full(N, DELTA_MAX))
    return Polytope(np.vstack(rows), np.concatenate(rhs))


def solve_safety_program(
    spec: SafetySpec, sys: SystemDynamics, x, objective: ObjectiveChoice
) -> SafetyProgramResult:
    m, N = spec.m, spec.n_barriers
    lifted = lifted_polytope(spec, sys, x)

    if isinstance(objective, Feasibility):
        cheb = chebyshev(lifted)
        if not cheb.feasible:
            return _infeasible(x)
        z, value, radius = cheb.center, 0.0, cheb.radius
    elif isinstance(objective, LinearCost):
        c = np.asarray(objective.c, dtype=float)
        if c.shape != (m + N,):
            raise DimensionMismatch(f"linear cost must have {m + N} entries, got {c.shape}")
        outcome = solve_lp(LinearProgram(c=c, A=lifted.A, b=lifted.b))
        if outcome.status == SolveStatus.INFEASIBLE:
            return _infeasible(x)
        if not outcome.optimal:
            return SafetyProgramResult(status=outcome.status)
        z, value, radius = outcome.point, outcome.objective, None
    elif isinstance(objective, Tracking):
        u_nom = objective.nominal(x)
        w = np.atleast_1d(np.asarray(objective.weights, dtype=float))
        if u_nom.shape != (m,) or w.shape != (N,):
            raise DimensionMismatch(
                f"tracking needs u_nom in R^{m} and {N} weights, got {u_nom.shape}, {w.shape}"
            )
        if np.any(w <= 0):
            raise InvalidParameter("tracking weights must be positive")
        Q = np.diag(np.concatenate([np.ones(m), w]))
        c = np.concatenate([-u_nom, np.zeros(N)])
        outcome = solve_qp(QuadraticProgram(Q=Q, c=c, A=lifted.A, b=lifted.b))
        if outcome.status == SolveStatus.INFEASIBLE:
            return _infeasible(x)
        if not outcome.optimal:
            return SafetyProgramResult(status=outcome.status)
        z, value, radius = outcome.point, outcome.objective, None
    else:
        raise InvalidParameter(f"unknown objective {objective!r}")

    v = z[:m]
    delta = z[m:]
    if np.min(delta, initial=0.0) >= -1e-12:
        delta = np.maximum(delta, 0.0)
    check_solution(spec, sys, x, v, delta, lifted=lifted, lifted_radius=radius)
    return SafetyProgramResult(
        status=SolveStatus.OPTIMAL, v=v, delta=delta, objective=float(value), lifted_radius=radius
    )


def _infeasible(x) -> SafetyProgramResult:
    logger.error(
        ErrorMessages.CERTIFICATION_FAILED.format(
            reason=f"safety program infeasible at x={np.round(np.asarray(x, dtype=float), 9).tolist()}"
        )
    )
    return SafetyProgramResult(status=SolveStatus.INFEASIBLE)


def check_solution(
    spec: SafetySpec,
    sys: SystemDynamics,
    x,
    v,
    delta,
    lifted: Optional[Polytope] = None,
    lifted_radius: Optional[float] = None,
) -> None:
    """
    Raise SolverFailure unless (v, delta) meets C1, C3 and 0 <= delta <= DELTA_MAX
    to FEASIBILITY_TOL. When lifted_radius is given, every row of the lifted
    polytope must also keep a slack of FEASIBILITY_INTERIOR_FRACTION * radius * |row|.
    """
    v = np.asarray(v, dtype=float)
    delta = np.asarray(delta, dtype=float)
    where = f"x={np.round(np.asarray(x, dtype=float), 9).tolist()}"
    if not contains(spec.input_set, v, FEASIBILITY_TOL):
        raise SolverFailure(f"safety program returned v outside the input set at {where}", SolveStatus.INFEASIBLE)
    if np.any(delta < -FEASIBILITY_TOL) or np.any(delta > DELTA_MAX + FEASIBILITY_TOL):
        raise SolverFailure(f"safety program slack out of [0, {DELTA_MAX}] at {where}", SolveStatus.INFEASIBLE)
    for i, h in enumerate(spec.barriers):
        Lf, Lg = lie_derivatives(sys, h, x)
        residual = Lf + Lg @ v + delta[i] * eval_h(h, x)
        if residual > FEASIBILITY_TOL:
            raise SolverFailure(
                f"barrier row {i} residual {residual:.3e} exceeds {FEASIBILITY_TOL:g} at {where}",
                SolveStatus.INFEASIBLE,
            )
    if lifted_radius is None:
        return
    if lifted is None:
        lifted = lifted_polytope(spec, sys, x)
    slack = lifted.b - lifted.A @ np.concatenate([v, delta])
    required = FEASIBILITY_INTERIOR_FRACTION * lifted_radius * lifted.row_norms()
    short = np.flatnonzero(slack < required - FEASIBILITY_TOL)
    if short.size:
        raise SolverFailure(
            f"lifted row {int(short[0])} slack {slack[short[0]]:.3e} below interior margin at {where}",
            SolveStatus.INFEASIBLE,
        )


# ------------------------- Slack witness ------------------------- #
@dataclass(frozen=True)
class SlackWitness:
    v: np.ndarray
    delta_bar: np.ndarray
    delta_hat: np.ndarray
    # L_f h_i + L_g h_i v + delta_hat_i h_i, all strictly negative
    residuals: np.ndarray


def slack_witness(
    spec: SafetySpec, sys: SystemDynamics, x, v, margin: float = 1.0
) -> SlackWitness:
    """
    Strictly feasible slacks for a given v in U at an interior point of S_I.

    delta_bar_i = -(L_f h_i + L_g h_i v) / h_i makes row i hold with equality;
    delta_hat_i = max(0, delta_bar_i) + margin makes it strict.
    """
    check_system(spec, sys)
    if not margin > 0:
        raise InvalidParameter(f"margin must be positive, got {margin}")
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if not contains(spec.input_set, v, FEASIBILITY_TOL):
        raise InvalidParameter("witness control must lie in the input set")
    h = spec.h_values(x)
    if np.any(h >= 0.0):
        raise PreconditionViolated(
            f"slack witness needs x in the interior of S_I, got h={h.tolist()}",
            condition="h_i(x) < 0 for all i",
        )
    drift = np.array([Lf + Lg @ v for Lf, Lg in (lie_derivatives(sys, b, x) for b in spec.barriers)])
    delta_bar = -drift / h
    delta_hat = np.maximum(0.0, delta_bar) + margin
    return SlackWitness(
        v=v, delta_bar=delta_bar, delta_hat=delta_hat, residuals=drift + delta_hat * h
    )
