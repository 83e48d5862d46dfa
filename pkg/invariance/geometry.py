"""
geometry.py

H-representation polytope arithmetic: {u : A u <= b}.

Every operation is a pure function of its inputs. Linear programs go through
the embedded simplex and projections through the embedded active-set QP, so no
vertex enumeration is ever needed.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from shared.constants import CONTAINS_TOL, DEFAULT_GAP_DIRECTIONS, SolveStatus
from shared.exceptions import (
    DimensionMismatch,
    EmptyPolytope,
    InvalidParameter,
    UnboundedDirection,
    UnboundedRadius,
)
from invariance.solver import LinearProgram, QuadraticProgram, solve_lp, solve_qp


@dataclass(frozen=True)
class Polytope:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float)).reshape(-1)
        if A.shape[0] < 1 or A.shape[1] < 1:
            raise DimensionMismatch(f"Polytope needs at least one row and column, got {A.shape}")
        if A.shape[0] != b.shape[0]:
            raise DimensionMismatch(
                f"A has {A.shape[0]} rows but b has {b.shape[0]} entries"
            )
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise InvalidParameter("Polytope entries must be finite")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.A, axis=1)

    def facet_slacks(self, u: np.ndarray) -> np.ndarray:
        """
        Euclidean distance from u to every facet hyperplane, signed positive
        inside. Zero rows report +inf when satisfied and -inf otherwise.
        """
        u = _as_point(self, u)
        raw = self.b - self.A @ u
        norms = self.row_norms()
        out = np.empty_like(raw)
        nonzero = norms > 0.0
        out[nonzero] = raw[nonzero] / norms[nonzero]
        out[~nonzero] = np.where(raw[~nonzero] >= 0.0, np.inf, -np.inf)
        return out


@dataclass(frozen=True)
class ChebyshevResult:
    feasible: bool
    center: Optional[np.ndarray] = None
    radius: float = 0.0


def _as_point(P: Polytope, u) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float)).reshape(-1)
    if u.shape[0] != P.dim:
        raise DimensionMismatch(f"point has {u.shape[0]} entries, polytope lives in R^{P.dim}")
    return u


def stack(P1: Polytope, P2: Polytope) -> Polytope:
    """Intersection by row stacking; rows of P1 come first."""
    if P1.dim != P2.dim:
        raise DimensionMismatch(f"cannot stack polytopes in R^{P1.dim} and R^{P2.dim}")
    return Polytope(np.vstack([P1.A, P2.A]), np.concatenate([P1.b, P2.b]))


def box_input_polytope(m: int, u_max: float) -> Polytope:
    """{u : ||u||_inf <= u_max} as A_u = I_m (x) [1; -1], b_u = u_max 1_2m."""
    if int(m) < 1:
        raise InvalidParameter(f"input dimension must be positive, got {m}")
    if not u_max > 0:
        raise InvalidParameter(f"u_max must be positive, got {u_max}")
    A = np.kron(np.eye(int(m)), np.array([[1.0], [-1.0]]))
    b = float(u_max) * np.ones(2 * int(m))
    return Polytope(A, b)


def contains(P: Polytope, u, tol: float = 0.0) -> bool:
    u = _as_point(P, u)
    return bool(np.all(P.A @ u <= P.b + tol))


def chebyshev(P: Polytope) -> ChebyshevResult:
    """
    Largest inscribed Euclidean ball: max r s.t. A_i u + r ||A_i|| <= b_i, r >= 0.

    Zero rows do not enter the LP; one with b_i < 0 makes the set empty.
    """
    norms = P.row_norms()
    zero = norms == 0.0
    if np.any(P.b[zero] < 0.0):
        return ChebyshevResult(feasible=False)
    A = P.A[~zero]
    b = P.b[~zero]
    m = P.dim
    if A.shape[0] == 0:
        raise UnboundedRadius("polytope has no nontrivial rows")

    lhs = np.vstack([np.hstack([A, norms[~zero, None]]), np.concatenate([np.zeros(m), [-1.0]])])
    rhs = np.concatenate([b, [0.0]])
    cost = np.zeros(m + 1)
    cost[-1] = -1.0
    outcome = solve_lp(LinearProgram(c=cost, A=lhs, b=rhs))
    if outcome.status == SolveStatus.INFEASIBLE:
        return ChebyshevResult(feasible=False)
    if outcome.status == SolveStatus.UNBOUNDED:
        raise UnboundedRadius("polytope contains balls of arbitrary radius")
    if not outcome.optimal:
        raise EmptyPolytope(f"Chebyshev LP ended with status {outcome.status}")
    z = outcome.point
    return ChebyshevResult(feasible=True, center=z[:m], radius=max(0.0, float(z[m])))


def erode(P: Polytope, gamma: float) -> Polytope:
    """Shift every facet inward by gamma along its unit normal."""
    if gamma < 0:
        raise InvalidParameter(f"gamma must be nonnegative, got {gamma}")
    return Polytope(P.A, P.b - gamma * P.row_norms())


def project_point(P: Polytope, y) -> Tuple[float, np.ndarray]:
    """Euclidean projection of y onto P; returns (distance, point)."""
    y = _as_point(P, y)
    if contains(P, y, CONTAINS_TOL):
        return 0.0, y.copy()
    qp = QuadraticProgram(Q=np.eye(P.dim), c=-y, A=P.A, b=P.b)
    outcome = solve_qp(qp)
    if outcome.status == SolveStatus.INFEASIBLE:
        raise EmptyPolytope("cannot project onto an empty polytope")
    if not outcome.optimal:
        raise EmptyPolytope(f"projection QP ended with status {outcome.status}")
    point = outcome.point
    return float(np.linalg.norm(point - y)), point


def support_point(P: Polytope, d) -> np.ndarray:
    """A basic maximizer of <d, u> over P."""
    d = _as_point(P, d)
    outcome = solve_lp(LinearProgram(c=-d, A=P.A, b=P.b))
    if outcome.status == SolveStatus.INFEASIBLE:
        raise EmptyPolytope("support point of an empty polytope")
    if outcome.status == SolveStatus.UNBOUNDED:
        raise UnboundedDirection(f"polytope is unbounded in direction {d.tolist()}")
    if not outcome.optimal:
        raise EmptyPolytope(f"support LP ended with status {outcome.status}")
    return outcome.point


def directed_gap(
    P1: Polytope,
    P2: Polytope,
    n_dirs: int = DEFAULT_GAP_DIRECTIONS,
    seed: int = 0,
) -> float:
    """
    Sampled lower bound on sup_{u in P1} d(u, P2): support points of P1 along
    seeded random unit directions, projected onto P2.
    """
    if P1.dim != P2.dim:
        raise DimensionMismatch(f"cannot compare polytopes in R^{P1.dim} and R^{P2.dim}")
    if n_dirs < 1:
        raise InvalidParameter(f"n_dirs must be positive, got {n_dirs}")
    rng = np.random.default_rng(seed)
    gap = 0.0
    for _ in range(n_dirs):
        d = rng.standard_normal(P1.dim)
        norm = np.linalg.norm(d)
        if norm == 0.0:
            continue
        distance, _ = project_point(P2, support_point(P1, d / norm))
        gap = max(gap, distance)
    return gap
