"""
feasible_map.py

Per-state feasible-control polytope

    K(x) = {u : L_g h_i(x) u <= -alpha_i(h_i(x)) - L_f h_i(x)  for all i,  A_u u <= b_u}

its Chebyshev-radius membership test for Omega, the gamma-contraction K_gamma(x),
and sampled estimates of the contraction margin and local Lipschitz constant.

The domain D is never materialized; samplers stand in for it.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from shared.constants import (
    DEFAULT_GAP_DIRECTIONS,
    DEFAULT_RHO,
    DEGENERATE_NORM,
    ErrorMessages,
    MIN_ACCEPTANCE_RATE,
)
from shared.exceptions import (
    DimensionMismatch,
    EmptyFeasibleSet,
    InvalidParameter,
    SampleOutsideOmega,
)
from shared.logger import get_logger
from invariance.barrier import (
    QUADRATIC,
    AlphaFunction,
    Barrier,
    SystemDynamics,
    eval_h,
    lie_derivatives,
)
from invariance.geometry import (
    ChebyshevResult,
    Polytope,
    chebyshev,
    directed_gap,
    erode,
    stack,
)

logger = get_logger(__name__)


@dataclass(frozen=True)
class SafetySpec:
    barriers: Tuple[Barrier, ...]
    alphas: Tuple[AlphaFunction, ...]
    input_set: Polytope
    # explicit sampling box, required when no barrier is compact
    bounding_box: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __post_init__(self):
        barriers = tuple(self.barriers)
        alphas = tuple(self.alphas)
        if len(barriers) < 1:
            raise InvalidParameter("a safety spec needs at least one barrier")
        if len(barriers) != len(alphas):
            raise DimensionMismatch(
                f"{len(barriers)} barriers but {len(alphas)} alpha functions"
            )
        dims = {h.n for h in barriers}
        if len(dims) != 1:
            raise DimensionMismatch(f"barriers disagree on state dimension: {sorted(dims)}")
        cheb = chebyshev(self.input_set)
        if not cheb.feasible or cheb.radius <= 0.0:
            raise InvalidParameter("input set must have a nonempty interior")
        if not all(h.compact for h in barriers):
            logger.warning(
                "Spec contains non-compact barriers; compactness of S_I is the caller's responsibility"
            )
            if self.bounding_box is None:
                raise InvalidParameter(
                    "specs with affine barriers need an explicit bounding_box"
                )
        object.__setattr__(self, "barriers", barriers)
        object.__setattr__(self, "alphas", alphas)

    @property
    def n(self) -> int:
        return self.barriers[0].n

    @property
    def m(self) -> int:
        return self.input_set.dim

    @property
    def n_barriers(self) -> int:
        return len(self.barriers)

    def h_values(self, x) -> np.ndarray:
        return np.array([eval_h(h, x) for h in self.barriers])

    def in_safe_set(self, x, tol: float = 0.0) -> bool:
        return bool(np.all(self.h_values(x) <= tol))

    def box(self) -> Tuple[np.ndarray, np.ndarray]:
        """Bounding box of S_I: intersection of the ellipsoid boxes (and the explicit box)."""
        lo = np.full(self.n, -np.inf)
        hi = np.full(self.n, np.inf)
        for h in self.barriers:
            if h.kind != QUADRATIC:
                continue
            half = np.sqrt(h.level * np.diag(np.linalg.inv(h.shape)))
            lo = np.maximum(lo, h.center - half)
            hi = np.minimum(hi, h.center + half)
        if self.bounding_box is not None:
            lo = np.maximum(lo, np.asarray(self.bounding_box[0], dtype=float))
            hi = np.minimum(hi, np.asarray(self.bounding_box[1], dtype=float))
        return lo, hi


@dataclass(frozen=True)
class FeasibleMapResult:
    K: Polytope
    cheb: ChebyshevResult

    @property
    def in_omega(self) -> bool:
        return self.cheb.feasible and self.cheb.radius > 0.0


def check_system(spec: SafetySpec, sys: SystemDynamics) -> None:
    if sys.n != spec.n:
        raise DimensionMismatch(f"system has n={sys.n}, barriers have n={spec.n}")
    if sys.m != spec.m:
        raise DimensionMismatch(f"system has m={sys.m}, input set lives in R^{spec.m}")


def barrier_rows(spec: SafetySpec, sys: SystemDynamics, x) -> Polytope:
    """Rows A_i = L_g h_i(x), b_i = -alpha_i(h_i(x)) - L_f h_i(x), in spec order."""
    check_system(spec, sys)
    A = np.zeros((spec.n_barriers, spec.m))
    b = np.zeros(spec.n_barriers)
    for i, (h, alpha) in enumerate(zip(spec.barriers, spec.alphas)):
        Lf, Lg = lie_derivatives(sys, h, x)
        A[i] = Lg
        b[i] = -alpha(eval_h(h, x)) - Lf
    return Polytope(A, b)


def build_K(spec: SafetySpec, sys: SystemDynamics, x) -> FeasibleMapResult:
    K = stack(barrier_rows(spec, sys, x), spec.input_set)
    return FeasibleMapResult(K=K, cheb=chebyshev(K))


def build_K_gamma(spec: SafetySpec, sys: SystemDynamics, x, gamma: float) -> Polytope:
    if gamma < 0:
        raise InvalidParameter(f"gamma must be nonnegative, got {gamma}")
    return erode(build_K(spec, sys, x).K, gamma)


# ------------------------- Samplers ------------------------- #
class BoxSampler:
    """Uniform samples in an axis-aligned box."""

    def __init__(self, lo: Sequence[float], hi: Sequence[float]):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if self.lo.shape != self.hi.shape or np.any(self.hi < self.lo):
            raise InvalidParameter("box sampler needs lo <= hi of equal length")

    def sample(self, count: int, seed: int) -> List[np.ndarray]:
        rng = np.random.default_rng(seed)
        return [rng.uniform(self.lo, self.hi) for _ in range(count)]


class BallSampler:
    """Uniform samples in a closed Euclidean ball."""

    def __init__(self, center: Sequence[float], radius: float):
        self.center = np.asarray(center, dtype=float)
        if not radius > 0:
            raise InvalidParameter(f"ball radius must be positive, got {radius}")
        self.radius = float(radius)

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        n = self.center.shape[0]
        v = rng.standard_normal(n)
        v /= max(np.linalg.norm(v), DEGENERATE_NORM)
        return self.center + self.radius * rng.uniform() ** (1.0 / n) * v

    def sample(self, count: int, seed: int) -> List[np.ndarray]:
        rng = np.random.default_rng(seed)
        return [self.draw(rng) for _ in range(count)]


class SafeSetSampler:
    """
    Rejection sampling of S_I (or of its strict interior when `strict`) inside
    the bounding box of the spec's barriers.
    """

    def __init__(self, spec: SafetySpec, strict: bool = False, margin: float = 0.0):
        self.spec = spec
        self.strict = strict
        self.margin = margin
        self.acceptance_rate: Optional[float] = None

    def accepts(self, x: np.ndarray) -> bool:
        h = self.spec.h_values(x)
        if self.strict:
            return bool(np.all(h < -self.margin))
        return bool(np.all(h <= -self.margin))

    def sample(self, count: int, seed: int) -> List[np.ndarray]:
        lo, hi = self.spec.box()
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))) or np.any(hi < lo):
            raise InvalidParameter("safe set has no finite bounding box to sample from")
        rng = np.random.default_rng(seed)
        accepted: List[np.ndarray] = []
        draws = 0
        max_draws = int(np.ceil(count / MIN_ACCEPTANCE_RATE))
        while len(accepted) < count:
            if draws >= max_draws:
                self.acceptance_rate = len(accepted) / max(draws, 1)
                raise InvalidParameter(
                    f"safe-set acceptance rate {self.acceptance_rate:.2e} below {MIN_ACCEPTANCE_RATE:.0e}"
                )
            x = rng.uniform(lo, hi)
            draws += 1
            if self.accepts(x):
                accepted.append(x)
        self.acceptance_rate = count / draws
        if self.acceptance_rate < 10 * MIN_ACCEPTANCE_RATE:
            logger.warning(f"Low safe-set acceptance rate: {self.acceptance_rate:.2e}")
        return accepted


# ------------------------- Margins ------------------------- #
@dataclass(frozen=True)
class RadiusSweep:
    min_radius: float
    argmin: np.ndarray
    count: int
    in_omega_count: int


def sample_min_radius(
    spec: SafetySpec, sys: SystemDynamics, domain_sampler, count: int, seed: int
) -> RadiusSweep:
    """Minimum Chebyshev radius of K(x) over sampled x; raises on the first x outside Omega."""
    if count < 1:
        raise InvalidParameter(f"count must be positive, got {count}")
    best = np.inf
    argmin = None
    for x in domain_sampler.sample(count, seed):
        result = build_K(spec, sys, x)
        if not result.in_omega:
            radius = result.cheb.radius if result.cheb.feasible else None
            raise SampleOutsideOmega(
                ErrorMessages.SAMPLE_OUTSIDE_OMEGA.format(x=np.round(x, 12).tolist(), radius=radius),
                x,
                radius,
            )
        if result.cheb.radius < best:
            best = result.cheb.radius
            argmin = np.asarray(x)
    return RadiusSweep(min_radius=float(best), argmin=argmin, count=count, in_omega_count=count)


def estimate_gamma(
    spec: SafetySpec,
    sys: SystemDynamics,
    domain_sampler,
    rho: float = DEFAULT_RHO,
    count: int = 500,
    seed: int = 0,
) -> float:
    """gamma = rho * min sampled Chebyshev radius, rho in the open interval (0, 1)."""
    if not 0.0 < rho < 1.0:
        raise InvalidParameter(f"rho must lie strictly between 0 and 1, got {rho}")
    sweep = sample_min_radius(spec, sys, domain_sampler, count, seed)
    gamma = rho * sweep.min_radius
    logger.debug(f"estimate_gamma: min radius {sweep.min_radius:.6g} over {count} samples")
    return gamma


@dataclass(frozen=True)
class DomainCoverReport:
    total: int
    in_omega_count: int
    min_radius: float
    worst_x: Optional[np.ndarray]

    @property
    def covered(self) -> bool:
        return self.total > 0 and self.in_omega_count == self.total


def check_domain_cover(
    spec: SafetySpec, sys: SystemDynamics, count: int, seed: int
) -> DomainCoverReport:
    """Sample S_I and count how many samples have a K(x) with nonempty interior."""
    inside = 0
    best = np.inf
    worst_x = None
    for x in SafeSetSampler(spec).sample(count, seed):
        result = build_K(spec, sys, x)
        radius = result.cheb.radius if result.cheb.feasible else -np.inf
        if result.in_omega:
            inside += 1
        if radius < best:
            best, worst_x = radius, x
    return DomainCoverReport(total=count, in_omega_count=inside, min_radius=float(best), worst_x=worst_x)


def lipschitz_estimate(
    spec: SafetySpec,
    sys: SystemDynamics,
    x,
    radius: float,
    n_pairs: int,
    gamma: float,
    seed: int = 0,
) -> float:
    """
    Empirical lower estimate of the local Lipschitz constant of K_gamma near x:
    max over seeded pairs in the ball of directed_gap(K_gamma(x2), K_gamma(x1)) / |x1 - x2|.
    """
    ball = BallSampler(x, radius)
    rng = np.random.default_rng(seed)
    estimate = 0.0
    skipped = 0
    for index in range(n_pairs):
        x1, x2 = ball.draw(rng), ball.draw(rng)
        distance = np.linalg.norm(x1 - x2)
        if distance < DEGENERATE_NORM:
            skipped += 1
            continue
        sets = []
        for point in (x1, x2):
            result = build_K(spec, sys, point)
            if not result.in_omega:
                raise SampleOutsideOmega(
                    ErrorMessages.SAMPLE_OUTSIDE_OMEGA.format(x=point.tolist(), radius=result.cheb.radius),
                    point,
                    result.cheb.radius if result.cheb.feasible else None,
                )
            if result.cheb.radius < gamma:
                raise EmptyFeasibleSet(ErrorMessages.EMPTY_FEASIBLE_SET.format(x=point.tolist(), gamma=gamma))
            sets.append(erode(result.K, gamma))
        gap = directed_gap(sets[1], sets[0], DEFAULT_GAP_DIRECTIONS, seed + index)
        estimate = max(estimate, gap / distance)
    if skipped:
        logger.info(f"lipschitz_estimate: skipped {skipped} degenerate pairs")
    return estimate
