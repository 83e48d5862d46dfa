"""
barrier.py

Catalog of C^1 barrier functions, extended class-K-infinity gains and
control-affine dynamics, with closed-form gradients and Lie derivatives.

Safe sets are sublevel sets: S = {x : h(x) <= 0}.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from shared.constants import BOUNDARY_TOL, SYMMETRY_TOL, SolveStatus
from shared.exceptions import (
    DimensionMismatch,
    EmptyPolytope,
    InvalidParameter,
    UnsupportedBarrierKind,
)
from shared.logger import get_logger
from invariance.geometry import Polytope
from invariance.solver import LinearProgram, solve_lp

logger = get_logger(__name__)

QUADRATIC = "quadratic"
AFFINE = "affine"
LINEAR = "linear"
CUBIC = "cubic"


def _vector(x, n: int, what: str) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(-1)
    if x.shape[0] != n:
        raise DimensionMismatch(f"{what} has {x.shape[0]} entries, expected {n}")
    return x


@dataclass(frozen=True)
class Barrier:
    """
    quadratic: h(x) = (x - c)^T P (x - c) - r
    affine:    h(x) = a^T x - beta
    """

    kind: str
    center: Optional[np.ndarray] = None
    shape: Optional[np.ndarray] = None
    level: float = 0.0
    normal: Optional[np.ndarray] = None
    offset: float = 0.0
    name: str = ""

    @classmethod
    def quadratic(cls, center, shape, level: float, name: str = "") -> "Barrier":
        c = np.atleast_1d(np.asarray(center, dtype=float)).reshape(-1)
        P = np.atleast_2d(np.asarray(shape, dtype=float))
        n = c.shape[0]
        if P.shape != (n, n):
            raise DimensionMismatch(f"shape matrix must be {n}x{n}, got {P.shape}")
        if np.max(np.abs(P - P.T)) > SYMMETRY_TOL:
            raise InvalidParameter("shape matrix must be symmetric")
        if np.min(np.linalg.eigvalsh(P)) <= 0.0:
            raise InvalidParameter("shape matrix must be positive definite")
        if not level > 0:
            raise InvalidParameter(f"level must be positive, got {level}")
        return cls(kind=QUADRATIC, center=c, shape=P, level=float(level), name=name)

    @classmethod
    def disk(cls, center, radius: float, name: str = "") -> "Barrier":
        c = np.atleast_1d(np.asarray(center, dtype=float)).reshape(-1)
        return cls.quadratic(c, np.eye(c.shape[0]), float(radius) ** 2, name=name)

    @classmethod
    def affine(
        cls, normal, offset: float, acknowledge_noncompact: bool = False, name: str = ""
    ) -> "Barrier":
        a = np.atleast_1d(np.asarray(normal, dtype=float)).reshape(-1)
        if np.linalg.norm(a) == 0.0:
            raise InvalidParameter("affine barrier normal must be nonzero")
        if not acknowledge_noncompact:
            raise InvalidParameter(
                "affine barriers have non-compact sublevel sets; "
                "pass acknowledge_noncompact=True to construct one"
            )
        logger.warning(
            f"Affine barrier {name or a.tolist()} accepted: its sublevel set is not compact"
        )
        return cls(kind=AFFINE, normal=a, offset=float(offset), name=name)

    @property
    def n(self) -> int:
        return (self.center if self.kind == QUADRATIC else self.normal).shape[0]

    @property
    def compact(self) -> bool:
        return self.kind == QUADRATIC


@dataclass(frozen=True)
class AlphaFunction:
    """Extended class-K-infinity gain: alpha(s) = k s or k s^3."""

    kind: str = LINEAR
    k: float = 1.0

    def __post_init__(self):
        if self.kind not in (LINEAR, CUBIC):
            raise InvalidParameter(f"unknown alpha kind '{self.kind}'")
        if not self.k > 0:
            raise InvalidParameter(f"alpha gain must be positive, got {self.k}")

    def __call__(self, s: float) -> float:
        if self.kind == LINEAR:
            return self.k * s
        return self.k * s**3


@dataclass(frozen=True)
class SystemDynamics:
    """
    x' = f(x) + g(x) u with
      f(x) = F x + d + [x^T Q_i x]_i
      g(x) = G0 + sum_k x_k G_k
    """

    F: np.ndarray
    d: np.ndarray
    G0: np.ndarray
    quadratic: Tuple[np.ndarray, ...] = field(default_factory=tuple)
    input_gains: Tuple[np.ndarray, ...] = field(default_factory=tuple)
    name: str = ""

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        n = F.shape[0]
        if F.shape != (n, n):
            raise DimensionMismatch(f"F must be square, got {F.shape}")
        d = _vector(self.d, n, "drift offset d")
        G0 = np.asarray(self.G0, dtype=float).reshape(n, -1)
        m = G0.shape[1]
        quadratic = tuple(np.asarray(Q, dtype=float) for Q in self.quadratic)
        if quadratic and len(quadratic) != n:
            raise DimensionMismatch(f"need {n} quadratic drift terms, got {len(quadratic)}")
        for Q in quadratic:
            if Q.shape != (n, n):
                raise DimensionMismatch(f"quadratic drift term must be {n}x{n}, got {Q.shape}")
            if np.max(np.abs(Q - Q.T)) > SYMMETRY_TOL:
                raise InvalidParameter("quadratic drift terms must be symmetric")
        gains = tuple(np.asarray(G, dtype=float) for G in self.input_gains)
        if gains and len(gains) != n:
            raise DimensionMismatch(f"need {n} input gain matrices, got {len(gains)}")
        for G in gains:
            if G.shape != (n, m):
                raise DimensionMismatch(f"input gain must be {n}x{m}, got {G.shape}")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "G0", G0)
        object.__setattr__(self, "quadratic", quadratic)
        object.__setattr__(self, "input_gains", gains)

    @property
    def n(self) -> int:
        return self.F.shape[0]

    @property
    def m(self) -> int:
        return self.G0.shape[1]

    def f(self, x) -> np.ndarray:
        x = _vector(x, self.n, "state")
        out = self.F @ x + self.d
        if self.quadratic:
            out = out + np.array([x @ Q @ x for Q in self.quadratic])
        return out

    def g(self, x) -> np.ndarray:
        x = _vector(x, self.n, "state")
        out = self.G0.copy()
        for xk, Gk in zip(x, self.input_gains):
            out = out + xk * Gk
        return out

    def vector_field(self, x, u) -> np.ndarray:
        u = _vector(u, self.m, "control")
        return self.f(x) + self.g(x) @ u

    # catalog constructors
    @classmethod
    def single_integrator(cls, n: int, drift: Optional[Sequence[float]] = None) -> "SystemDynamics":
        d = np.zeros(n) if drift is None else np.asarray(drift, dtype=float)
        return cls(F=np.zeros((n, n)), d=d, G0=np.eye(n), name="single_integrator")

    @classmethod
    def linear(cls, F, G, d=None) -> "SystemDynamics":
        F = np.atleast_2d(np.asarray(F, dtype=float))
        d = np.zeros(F.shape[0]) if d is None else d
        return cls(F=F, d=d, G0=G, name="linear")

    @classmethod
    def double_integrator(cls, dims: int = 1) -> "SystemDynamics":
        n = 2 * dims
        F = np.zeros((n, n))
        F[:dims, dims:] = np.eye(dims)
        G = np.zeros((n, dims))
        G[dims:, :] = np.eye(dims)
        return cls(F=F, d=np.zeros(n), G0=G, name="double_integrator")


# ------------------------- Barrier operations ------------------------- #
def eval_h(h: Barrier, x) -> float:
    x = _vector(x, h.n, "state")
    if h.kind == QUADRATIC:
        e = x - h.center
        return float(e @ h.shape @ e - h.level)
    if h.kind == AFFINE:
        return float(h.normal @ x - h.offset)
    raise UnsupportedBarrierKind(h.kind)


def grad_h(h: Barrier, x) -> np.ndarray:
    x = _vector(x, h.n, "state")
    if h.kind == QUADRATIC:
        return 2.0 * h.shape @ (x - h.center)
    if h.kind == AFFINE:
        return h.normal.copy()
    raise UnsupportedBarrierKind(h.kind)


def lie_derivatives(sys: SystemDynamics, h: Barrier, x) -> Tuple[float, np.ndarray]:
    """(L_f h(x), L_g h(x)) with L_g h as an m-vector."""
    if sys.n != h.n:
        raise DimensionMismatch(f"system has n={sys.n} but barrier has n={h.n}")
    grad = grad_h(h, x)
    return float(grad @ sys.f(x)), grad @ sys.g(x)


def fd_gradient_check(h: Barrier, x, step: float = 1e-6) -> float:
    """Max componentwise |analytic - central difference| / max(1, ||analytic||)."""
    if not step > 0:
        raise InvalidParameter(f"step must be positive, got {step}")
    x = _vector(x, h.n, "state")
    analytic = grad_h(h, x)
    numeric = np.empty_like(analytic)
    for i in range(h.n):
        e = np.zeros(h.n)
        e[i] = step
        numeric[i] = (eval_h(h, x + e) - eval_h(h, x - e)) / (2.0 * step)
    return float(np.max(np.abs(analytic - numeric)) / max(1.0, np.linalg.norm(analytic)))


def strict_cbf_margin(sys: SystemDynamics, h: Barrier, U: Polytope, x) -> float:
    """min over u in U of L_f h(x) + L_g h(x) u."""
    if U.dim != sys.m:
        raise DimensionMismatch(f"input polytope lives in R^{U.dim}, system has m={sys.m}")
    Lf, Lg = lie_derivatives(sys, h, x)
    outcome = solve_lp(LinearProgram(c=Lg, A=U.A, b=U.b))
    if outcome.status == SolveStatus.INFEASIBLE:
        raise EmptyPolytope("input set is empty")
    if not outcome.optimal:
        raise EmptyPolytope(f"margin LP ended with status {outcome.status}")
    return Lf + outcome.objective


def boundary_sample(
    h: Barrier,
    count: int,
    seed: int = 0,
    box: Optional[Tuple[Sequence[float], Sequence[float]]] = None,
) -> List[np.ndarray]:
    """
    Points on the zero level set of h. Ellipsoids are sampled exactly by
    mapping the unit sphere through c + sqrt(r) P^{-1/2}; affine boundaries
    need a bounding box (lo, hi).
    """
    if count < 1:
        raise InvalidParameter(f"count must be positive, got {count}")
    rng = np.random.default_rng(seed)
    if h.kind == QUADRATIC:
        eigvals, eigvecs = np.linalg.eigh(h.shape)
        inv_sqrt = eigvecs @ np.diag(eigvals**-0.5) @ eigvecs.T
        points = []
        while len(points) < count:
            v = rng.standard_normal(h.n)
            norm = np.linalg.norm(v)
            if norm == 0.0:
                continue
            points.append(h.center + np.sqrt(h.level) * inv_sqrt @ (v / norm))
        return points

    if box is None:
        raise UnsupportedBarrierKind("affine boundaries need a bounding box to sample")
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    a = h.normal
    points = []
    attempts = 0
    while len(points) < count:
        attempts += 1
        if attempts > 1000 * count:
            raise InvalidParameter("affine boundary does not cross the bounding box")
        x = rng.uniform(lo, hi)
        x = x - (a @ x - h.offset) * a / (a @ a)
        if np.all(x >= lo - BOUNDARY_TOL) and np.all(x <= hi + BOUNDARY_TOL):
            points.append(x)
    return points
