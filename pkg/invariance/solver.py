"""
solver.py

Embedded dense solvers for the small problems the toolkit poses at every
state: a two-phase tableau simplex with Bland's rule for linear programs and a
primal active-set method for strictly convex quadratic programs.

Both solvers take inequality constraints A z <= b over free variables z.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from shared.constants import (
    DUAL_TOL,
    FEASIBILITY_TOL,
    LP_PIVOT_FACTOR,
    QP_ITERATION_FACTOR,
    QP_MIN_EIGENVALUE,
    QP_RIDGE,
    QP_SYMMETRY_TOL,
    SolveStatus,
)
from shared.exceptions import DimensionMismatch, InvalidParameter
from shared.logger import get_logger

logger = get_logger(__name__)

PIVOT_TOL = 1e-11
REDUCED_COST_TOL = 1e-10
STEP_TOL = 1e-12


@dataclass(frozen=True)
class LinearProgram:
    """minimize c^T z  s.t.  A z <= b"""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        _check_constraints(self.c, self.A, self.b)


@dataclass(frozen=True)
class QuadraticProgram:
    """minimize 1/2 z^T Q z + c^T z  s.t.  A z <= b"""

    Q: np.ndarray
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        _check_constraints(self.c, self.A, self.b)
        Q = np.asarray(self.Q, dtype=float)
        n = np.asarray(self.c).shape[0]
        if Q.shape != (n, n):
            raise DimensionMismatch(f"Q must be {n}x{n}, got {Q.shape}")
        if not np.all(np.isfinite(Q)):
            raise InvalidParameter("Q has non-finite entries")
        if np.max(np.abs(Q - Q.T), initial=0.0) > QP_SYMMETRY_TOL:
            raise InvalidParameter("Q is not symmetric")


@dataclass
class SolveOutcome:
    status: str
    point: Optional[np.ndarray] = None
    objective: float = float("nan")
    kkt_residual: float = float("inf")
    multipliers: Optional[np.ndarray] = None
    iterations: int = 0
    regularized: bool = False
    notes: List[str] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == SolveStatus.OPTIMAL


def _check_constraints(c, A, b) -> None:
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if c.ndim != 1 or A.ndim != 2 or b.ndim != 1:
        raise DimensionMismatch("c and b must be vectors, A a matrix")
    if A.shape != (b.shape[0], c.shape[0]):
        raise DimensionMismatch(
            f"A must be {b.shape[0]}x{c.shape[0]}, got {A.shape}"
        )
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
        raise InvalidParameter("LP/QP data has non-finite entries")


def primal_residual(A: np.ndarray, b: np.ndarray, z: np.ndarray) -> float:
    if A.shape[0] == 0:
        return 0.0
    return float(max(0.0, np.max(A @ z - b)))


def kkt_residual(
    grad: np.ndarray, A: np.ndarray, b: np.ndarray, z: np.ndarray, lam: np.ndarray
) -> float:
    """Max of stationarity, dual infeasibility and complementarity violations."""
    stationarity = np.max(np.abs(grad + A.T @ lam), initial=0.0)
    dual = max(0.0, -float(np.min(lam, initial=0.0)))
    slack = b - A @ z
    complementarity = np.max(np.abs(lam * slack), initial=0.0)
    return float(max(stationarity, dual, complementarity))


# ------------------------- Simplex ------------------------- #
def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    for i in range(T.shape[0]):
        if i != row and T[i, col] != 0.0:
            T[i] -= T[i, col] * T[row]


def _run_simplex(
    T: np.ndarray, basis: List[int], allowed: np.ndarray, budget: int
) -> Tuple[str, int]:
    """
    Bland's rule: entering column is the lowest index with negative reduced
    cost; ties in the ratio test go to the lowest basic variable index.
    """
    pivots = 0
    while True:
        costs = T[-1, :-1]
        candidates = np.where(allowed & (costs < -REDUCED_COST_TOL))[0]
        if candidates.size == 0:
            return SolveStatus.OPTIMAL, pivots
        entering = int(candidates[0])
        column = T[:-1, entering]
        rows = np.where(column > PIVOT_TOL)[0]
        if rows.size == 0:
            return SolveStatus.UNBOUNDED, pivots
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        leaving = int(min(ties, key=lambda r: basis[r]))
        _pivot(T, leaving, entering)
        basis[leaving] = entering
        pivots += 1
        if pivots >= budget:
            return SolveStatus.ITERATION_LIMIT, pivots


def solve_lp(lp: LinearProgram) -> SolveOutcome:
    """
    Two-phase tableau simplex over free variables.

    Variables are split z = z+ - z-, every row receives a slack, and rows with
    negative right-hand side are negated and given an artificial. The returned
    point is a basic feasible solution.
    """
    c = np.asarray(lp.c, dtype=float)
    A = np.asarray(lp.A, dtype=float)
    b = np.asarray(lp.b, dtype=float)
    p, n = A.shape

    negative = b < 0
    n_art = int(np.count_nonzero(negative))
    n_struct = 2 * n + p
    n_cols = n_struct + n_art
    budget = LP_PIVOT_FACTOR * (p + n_cols)

    T = np.zeros((p + 1, n_cols + 1))
    T[:p, :n] = A
    T[:p, n : 2 * n] = -A
    T[:p, 2 * n : n_struct] = np.eye(p)
    T[:p, -1] = b
    basis: List[int] = []
    art = n_struct
    for i in range(p):
        if negative[i]:
            T[i, :n_struct] *= -1.0
            T[i, -1] *= -1.0
            T[i, art] = 1.0
            basis.append(art)
            art += 1
        else:
            basis.append(2 * n + i)

    pivots = 0
    if n_art:
        # phase 1: minimize the sum of artificials
        T[-1, n_struct:n_cols] = 1.0
        for i in range(p):
            if basis[i] >= n_struct:
                T[-1] -= T[i]
        status, pivots = _run_simplex(T, basis, np.ones(n_cols, dtype=bool), budget)
        if status == SolveStatus.ITERATION_LIMIT:
            return SolveOutcome(status=status, iterations=pivots)
        infeasibility = -T[-1, -1]
        if infeasibility > FEASIBILITY_TOL * max(1.0, float(np.max(-b[negative]))):
            return SolveOutcome(status=SolveStatus.INFEASIBLE, iterations=pivots)
        for i in range(p):
            if basis[i] >= n_struct:
                row = np.abs(T[i, :n_struct])
                j = int(np.argmax(row))
                if row[j] > PIVOT_TOL:
                    _pivot(T, i, j)
                    basis[i] = j

    # phase 2
    T = np.delete(T, np.s_[n_struct:n_cols], axis=1)
    cost = np.concatenate([c, -c, np.zeros(p)])
    T[-1, :] = 0.0
    T[-1, :n_struct] = cost
    for i in range(p):
        if basis[i] < n_struct and cost[basis[i]] != 0.0:
            T[-1] -= cost[basis[i]] * T[i]
    allowed = np.ones(n_struct, dtype=bool)
    status, more = _run_simplex(T, basis, allowed, max(1, budget - pivots))
    pivots += more
    if status != SolveStatus.OPTIMAL:
        return SolveOutcome(status=status, iterations=pivots)

    x_full = np.zeros(n_struct)
    for i in range(p):
        if basis[i] < n_struct:
            x_full[basis[i]] = T[i, -1]
    z = x_full[:n] - x_full[n : 2 * n]
    # reduced costs of the slack columns are the multipliers of A z <= b
    lam = np.maximum(T[-1, 2 * n : n_struct], 0.0)
    outcome = SolveOutcome(
        status=SolveStatus.OPTIMAL,
        point=z,
        objective=float(c @ z),
        kkt_residual=kkt_residual(c, A, b, z, lam),
        multipliers=lam,
        iterations=pivots,
    )
    logger.debug(f"solve_lp: {p}x{n} optimal after {pivots} pivots")
    return outcome


# ------------------------- Active set QP ------------------------- #
def _independent_subset(A: np.ndarray, candidates: List[int]) -> List[int]:
    chosen: List[int] = []
    for i in candidates:
        trial = chosen + [i]
        if np.linalg.matrix_rank(A[trial], tol=1e-10) == len(trial):
            chosen = trial
        if len(chosen) == A.shape[1]:
            break
    return chosen


def _solve_eqp(
    Q: np.ndarray, g: np.ndarray, A_w: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Solve min 1/2 p^T Q p + g^T p s.t. A_w p = 0; returns (p, multipliers)."""
    n = Q.shape[0]
    k = A_w.shape[0]
    kkt = np.zeros((n + k, n + k))
    kkt[:n, :n] = Q
    kkt[:n, n:] = A_w.T
    kkt[n:, :n] = A_w
    rhs = np.concatenate([-g, np.zeros(k)])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:n], sol[n:]


def solve_qp(qp: QuadraticProgram) -> SolveOutcome:
    """
    Primal active-set method started from a phase-1 basic feasible point.

    A ridge is added when Q is not safely positive definite; the outcome
    records it.
    """
    Q = np.asarray(qp.Q, dtype=float)
    Q = 0.5 * (Q + Q.T)
    c = np.asarray(qp.c, dtype=float)
    A = np.asarray(qp.A, dtype=float)
    b = np.asarray(qp.b, dtype=float)
    p, n = A.shape

    regularized = False
    if np.min(np.linalg.eigvalsh(Q)) < QP_MIN_EIGENVALUE:
        Q = Q + QP_RIDGE * np.eye(n)
        regularized = True
        if np.min(np.linalg.eigvalsh(Q)) < QP_MIN_EIGENVALUE:
            raise InvalidParameter("Q is not positive semidefinite")

    start = solve_lp(LinearProgram(c=np.zeros(n), A=A, b=b))
    if not start.optimal:
        status = (
            SolveStatus.INFEASIBLE
            if start.status != SolveStatus.ITERATION_LIMIT
            else start.status
        )
        return SolveOutcome(status=status, regularized=regularized)
    x = start.point.copy()

    scale = 1.0 + np.abs(b)
    active = [i for i in range(p) if b[i] - A[i] @ x <= 1e-9 * scale[i]]
    working = _independent_subset(A, active)

    budget = QP_ITERATION_FACTOR * n
    lam_w = np.zeros(0)
    for iteration in range(1, budget + 1):
        g = Q @ x + c
        step, lam_w = _solve_eqp(Q, g, A[working] if working else np.zeros((0, n)))
        if np.linalg.norm(step) <= STEP_TOL * (1.0 + np.linalg.norm(x)):
            if lam_w.size == 0 or np.min(lam_w) >= -DUAL_TOL:
                lam = np.zeros(p)
                lam[working] = np.maximum(lam_w, 0.0)
                return SolveOutcome(
                    status=SolveStatus.OPTIMAL,
                    point=x,
                    objective=float(0.5 * x @ Q @ x + c @ x),
                    kkt_residual=kkt_residual(Q @ x + c, A, b, x, lam),
                    multipliers=lam,
                    iterations=iteration,
                    regularized=regularized,
                )
            working.pop(int(np.argmin(lam_w)))
            continue

        alpha = 1.0
        blocking = None
        Ap = A @ step
        for i in range(p):
            if i in working or Ap[i] <= PIVOT_TOL:
                continue
            ratio = (b[i] - A[i] @ x) / Ap[i]
            if ratio < alpha:
                alpha = max(ratio, 0.0)
                blocking = i
        x = x + alpha * step
        if blocking is not None:
            working.append(blocking)

    logger.warning(f"solve_qp: iteration limit reached ({budget})")
    return SolveOutcome(
        status=SolveStatus.ITERATION_LIMIT, point=x, regularized=regularized
    )
