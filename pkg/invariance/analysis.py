"""
analysis.py

Certification of a safety spec: strict-CBF margins at boundary samples,
active index sets, pairwise transversality at boundary intersections, a
feasibility sweep over S_I, and a tangent-cone oracle for single states.
"""

from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np

from shared.constants import (
    BOUNDARY_TOL,
    CONE_TOL,
    DEFAULT_ANGLE_TOL,
    DEFAULT_BOUNDARY_SAMPLES,
    DEFAULT_DEDUP_DISTANCE,
    DEFAULT_INTERSECTION_STARTS,
    DEFAULT_SWEEP_SAMPLES,
    DEGENERATE_NORM,
    GAUSS_NEWTON_ITERATIONS,
    STRICT_MARGIN_FLOOR,
    ErrorMessages,
)
from shared.exceptions import DegenerateGradient, InvalidParameter, SolverFailure
from shared.logger import get_logger
from invariance.barrier import (
    QUADRATIC,
    Barrier,
    SystemDynamics,
    boundary_sample,
    eval_h,
    grad_h,
    strict_cbf_margin,
)
from invariance.feasible_map import SafeSetSampler, SafetySpec, build_K, check_system
from invariance.geometry import support_point
from invariance.policy import contracted_set
from invariance.safety_program import Feasibility, SafetyProgramResult, solve_safety_program

logger = get_logger(__name__)


@dataclass(frozen=True)
class ActiveIndexSet:
    indices: List[int]
    tol: float


def active_set(spec: SafetySpec, x, tol: float = BOUNDARY_TOL) -> ActiveIndexSet:
    """Barriers whose boundary passes through x together with at least one other."""
    near = [i for i, value in enumerate(spec.h_values(x)) if abs(value) <= tol]
    return ActiveIndexSet(indices=near if len(near) >= 2 else [], tol=tol)


@dataclass(frozen=True)
class TransversalityReport:
    point: np.ndarray
    pair: Tuple[int, int]
    cos_angle: float
    passed: bool
    degenerate: bool = False


def pairwise_transversality(
    spec: SafetySpec,
    x,
    i: int,
    j: int,
    angle_tol: float = DEFAULT_ANGLE_TOL,
    tol: float = CONE_TOL,
) -> TransversalityReport:
    """
    Normal cones of catalog barriers are rays along the gradients, so the
    pair fails transversality exactly when the gradients are anti-parallel.
    """
    if i == j:
        raise InvalidParameter("transversality needs two distinct barriers")
    if not angle_tol > 0:
        raise InvalidParameter(f"angle_tol must be positive, got {angle_tol}")
    x = np.asarray(x, dtype=float)
    hi, hj = spec.barriers[i], spec.barriers[j]
    if abs(eval_h(hi, x)) > tol or abs(eval_h(hj, x)) > tol:
        logger.warning(f"transversality of ({i}, {j}) checked off the common boundary at x={x.tolist()}")
    gi, gj = grad_h(hi, x), grad_h(hj, x)
    for index, g in ((i, gi), (j, gj)):
        if np.linalg.norm(g) < DEGENERATE_NORM:
            raise DegenerateGradient(ErrorMessages.DEGENERATE_GRADIENT.format(index=index, x=x.tolist()))
    cos_angle = float(np.clip(gi @ gj / (np.linalg.norm(gi) * np.linalg.norm(gj)), -1.0, 1.0))
    return TransversalityReport(
        point=x, pair=(i, j), cos_angle=cos_angle, passed=cos_angle > -1.0 + angle_tol
    )


def _barrier_box(spec: SafetySpec, h: Barrier) -> Tuple[np.ndarray, np.ndarray]:
    if h.kind == QUADRATIC:
        half = np.sqrt(h.level * np.diag(np.linalg.inv(h.shape)))
        return h.center - half, h.center + half
    lo, hi = spec.bounding_box
    return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)


def boundary_intersection_sample(
    spec: SafetySpec,
    i: int,
    j: int,
    count: int = DEFAULT_INTERSECTION_STARTS,
    seed: int = 0,
) -> List[np.ndarray]:
    """
    Gauss-Newton on (h_i, h_j) = 0 from seeded starts in the box covering
    both sets; converged points deduplicated. May be empty.
    """
    if i == j:
        raise InvalidParameter("boundary intersection needs two distinct barriers")
    hi, hj = spec.barriers[i], spec.barriers[j]
    lo_i, up_i = _barrier_box(spec, hi)
    lo_j, up_j = _barrier_box(spec, hj)
    lo, up = np.minimum(lo_i, lo_j), np.maximum(up_i, up_j)
    rng = np.random.default_rng(seed)
    found: List[np.ndarray] = []
    for _ in range(count):
        x = rng.uniform(lo, up)
        for _ in range(GAUSS_NEWTON_ITERATIONS):
            r = np.array([eval_h(hi, x), eval_h(hj, x)])
            if np.max(np.abs(r)) <= BOUNDARY_TOL:
                break
            J = np.vstack([grad_h(hi, x), grad_h(hj, x)])
            x = x - np.linalg.pinv(J) @ r
        residual = max(abs(eval_h(hi, x)), abs(eval_h(hj, x)))
        if residual > BOUNDARY_TOL:
            continue
        if all(np.linalg.norm(x - p) > DEFAULT_DEDUP_DISTANCE for p in found):
            found.append(x)
    if not found:
        logger.info(f"no boundary intersection found for barriers ({i}, {j})")
    return found


def active_gradient_sigma_min(spec: SafetySpec, x, tol: float = BOUNDARY_TOL) -> Optional[float]:
    """Smallest singular value of the stacked unit gradients of the active barriers."""
    active = active_set(spec, x, tol).indices
    if not active:
        return None
    rows = []
    for i in active:
        g = grad_h(spec.barriers[i], x)
        rows.append(g / max(np.linalg.norm(g), DEGENERATE_NORM))
    return float(np.linalg.svd(np.array(rows), compute_uv=False).min())


@dataclass
class CertificationReport:
    strict_cbf: List[float]
    transversality: List[TransversalityReport]
    feasibility_sweep: Tuple[int, int]
    gradient_sigma_min: List[float] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)

    @property
    def certified(self) -> bool:
        passed, total = self.feasibility_sweep
        return (
            all(margin < -STRICT_MARGIN_FLOOR for margin in self.strict_cbf)
            and all(report.passed for report in self.transversality)
            and total > 0
            and passed == total
        )


def certify(
    spec: SafetySpec,
    sys: SystemDynamics,
    boundary_samples: int = DEFAULT_BOUNDARY_SAMPLES,
    sweep_samples: int = DEFAULT_SWEEP_SAMPLES,
    seed: int = 0,
    intersection_starts: int = DEFAULT_INTERSECTION_STARTS,
    angle_tol: float = DEFAULT_ANGLE_TOL,
) -> CertificationReport:
    check_system(spec, sys)
    failures: List[str] = []

    # strict CBF on every boundary
    margins = []
    for i, h in enumerate(spec.barriers):
        points = boundary_sample(h, boundary_samples, seed + i, box=spec.bounding_box)
        worst = max(strict_cbf_margin(sys, h, spec.input_set, x) for x in points)
        margins.append(float(worst))
        if worst >= -STRICT_MARGIN_FLOOR:
            failures.append(f"barrier {i} is not a strict CBF: worst boundary margin {worst:.6g}")

    # transversality at every pairwise boundary intersection
    reports: List[TransversalityReport] = []
    sigmas: List[float] = []
    for i, j in combinations(range(spec.n_barriers), 2):
        for x in boundary_intersection_sample(spec, i, j, intersection_starts, seed):
            try:
                report = pairwise_transversality(spec, x, i, j, angle_tol)
            except DegenerateGradient as e:
                logger.warning(str(e))
                report = TransversalityReport(point=x, pair=(i, j), cos_angle=float("nan"), passed=False, degenerate=True)
            reports.append(report)
            if not report.passed:
                failures.append(
                    f"barriers ({i}, {j}) are not transversal at {np.round(x, 9).tolist()}"
                    f" (cos angle {report.cos_angle:.6g})"
                )
            sigma = active_gradient_sigma_min(spec, x, BOUNDARY_TOL)
            if sigma is not None:
                sigmas.append(sigma)

    # safety program feasibility over S_I
    passed = 0
    try:
        sweep = SafeSetSampler(spec).sample(sweep_samples, seed)
    except InvalidParameter as e:
        failures.append(f"feasibility sweep could not sample S_I: {e}")
        sweep = []
    for x in sweep:
        result = build_K(spec, sys, x)
        try:
            program = solve_safety_program(spec, sys, x, Feasibility())
        except SolverFailure as e:
            logger.warning(str(e))
            program = SafetyProgramResult(status=e.status)
        if result.in_omega and program.optimal and (program.lifted_radius or 0.0) > 0.0:
            passed += 1
        elif len(failures) < 50:
            failures.append(f"feasibility sweep failed at {np.round(x, 9).tolist()}")

    report = CertificationReport(
        strict_cbf=margins,
        transversality=reports,
        feasibility_sweep=(passed, sweep_samples),
        gradient_sigma_min=sigmas,
        failures=failures,
    )
    for failure in failures:
        logger.error(ErrorMessages.CERTIFICATION_FAILED.format(reason=failure))
    return report


def cone_intersection_oracle(
    spec: SafetySpec,
    sys: SystemDynamics,
    x,
    gamma: float,
    n_controls: int,
    seed: int = 0,
    controls: Optional[Sequence[np.ndarray]] = None,
    tol: float = CONE_TOL,
) -> bool:
    """
    Every sampled member u of K_gamma(x) must point into the half-space
    tangent cone of each barrier whose boundary passes through x. Controls
    are convex combinations of seeded support points and the Chebyshev
    center; `controls` overrides the sample.
    """
    x = np.asarray(x, dtype=float)
    K_gamma, center = contracted_set(spec, sys, x, gamma)
    active = [i for i, value in enumerate(spec.h_values(x)) if abs(value) <= tol]
    if not active:
        return True
    if controls is None:
        rng = np.random.default_rng(seed)
        anchors = [center]
        for _ in range(max(spec.m + 1, 4)):
            d = rng.standard_normal(spec.m)
            anchors.append(support_point(K_gamma, d / max(np.linalg.norm(d), DEGENERATE_NORM)))
        anchors = np.array(anchors)
        controls = [rng.dirichlet(np.ones(len(anchors))) @ anchors for _ in range(n_controls)]
    ok = True
    for u in controls:
        xdot = sys.vector_field(x, u)
        for i in active:
            rate = float(grad_h(spec.barriers[i], x) @ xdot)
            if rate > tol:
                logger.debug(f"control {np.round(u, 9).tolist()} leaves the tangent cone of barrier {i}")
                ok = False
    return ok
