"""
scenario.py

Strict JSON scenario files. Parsing is fail-closed: unknown keys, wrong
types and inconsistent dimensions are all rejected with field diagnostics.
A parsed file is turned into library objects by `build_scenario`.
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import AfterValidator, BaseModel, ConfigDict, Field, ValidationError, model_validator

from shared.constants import (
    DEFAULT_BOUNDARY_SAMPLES,
    DEFAULT_INTERSECTION_STARTS,
    DEFAULT_RHO,
    DEFAULT_SWEEP_SAMPLES,
    DEFAULT_VIOLATION_TOL,
    ErrorMessages,
    PolicyNames,
)
from shared.exceptions import InvalidParameter, InvarianceError, SampleOutsideOmega, ScenarioError
from shared.logger import get_logger
from invariance.barrier import AlphaFunction, Barrier, SystemDynamics
from invariance.feasible_map import SafeSetSampler, SafetySpec, build_K, check_domain_cover, check_system, estimate_gamma
from invariance.geometry import Polytope, box_input_polytope
from invariance.policy import Policy, make_policy
from invariance.safety_program import Feasibility, LinearCost, NominalControl, Tracking
from invariance.simulator import SimConfig

logger = get_logger(__name__)


def _rectangular(rows: List[List[float]]) -> List[List[float]]:
    if not rows or not rows[0]:
        raise ValueError("matrix must have at least one row and one column")
    width = len(rows[0])
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"ragged matrix: row {i} has {len(row)} entries, row 0 has {width}")
    return rows


Vector = List[float]
Matrix = Annotated[List[List[float]], AfterValidator(_rectangular)]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ------------------------- System catalog ------------------------- #
class SingleIntegratorBlock(_Strict):
    type: Literal["single_integrator"]
    n: int = Field(ge=1)
    drift: Optional[Vector] = None


class LinearSystemBlock(_Strict):
    type: Literal["linear"]
    F: Matrix
    G: Matrix
    d: Optional[Vector] = None


class DoubleIntegratorBlock(_Strict):
    type: Literal["double_integrator"]
    dims: int = Field(default=1, ge=1)


class PolynomialSystemBlock(_Strict):
    type: Literal["polynomial"]
    F: Matrix
    d: Vector
    G: Matrix
    quadratic: List[Matrix] = Field(default_factory=list)
    input_gains: List[Matrix] = Field(default_factory=list)


SystemBlock = Annotated[
    Union[SingleIntegratorBlock, LinearSystemBlock, DoubleIntegratorBlock, PolynomialSystemBlock],
    Field(discriminator="type"),
]


# ------------------------- Barrier catalog ------------------------- #
class DiskBlock(_Strict):
    type: Literal["disk"]
    center: Vector
    radius: float = Field(gt=0)
    name: str = ""


class QuadraticBlock(_Strict):
    type: Literal["quadratic"]
    center: Vector
    shape: Matrix
    level: float = Field(gt=0)
    name: str = ""


class AffineBlock(_Strict):
    type: Literal["affine"]
    normal: Vector
    offset: float
    acknowledge_noncompact: bool = False
    name: str = ""


BarrierBlock = Annotated[Union[DiskBlock, QuadraticBlock, AffineBlock], Field(discriminator="type")]


class AlphaBlock(_Strict):
    kind: Literal["linear", "cubic"] = "linear"
    k: float = Field(default=1.0, gt=0)


class BoxInputBlock(_Strict):
    type: Literal["box"]
    u_max: float = Field(gt=0)


class PolytopeInputBlock(_Strict):
    type: Literal["polytope"]
    A: Matrix
    b: Vector


InputBlock = Annotated[Union[BoxInputBlock, PolytopeInputBlock], Field(discriminator="type")]


class BoundingBoxBlock(_Strict):
    lo: Vector
    hi: Vector


# ------------------------- Policies ------------------------- #
class NominalBlock(_Strict):
    K: Matrix
    k0: Optional[Vector] = None


NominalSpec = Union[Vector, NominalBlock]


class ChebyshevCenterBlock(_Strict):
    name: Literal["chebyshev_center"]


class QPTrackingBlock(_Strict):
    name: Literal["qp_tracking"]
    u_nom: NominalSpec
    weights: Optional[Vector] = None


class LPVertexBlock(_Strict):
    name: Literal["lp_vertex"]
    cost: Vector


class RotatingVertexBlock(_Strict):
    name: Literal["rotating_vertex"]
    costs: List[Vector] = Field(min_length=2)
    period: int = Field(default=1, ge=1)


class SafetyProgramBlock(_Strict):
    name: Literal["safety_program"]
    objective: Literal["feasibility", "linear", "tracking"] = "feasibility"
    cost: Optional[Vector] = None
    u_nom: Optional[NominalSpec] = None
    weights: Optional[Vector] = None

    @model_validator(mode="after")
    def _objective_fields(self):
        if self.objective == "linear" and self.cost is None:
            raise ValueError("linear objective needs 'cost'")
        if self.objective == "tracking" and (self.u_nom is None or self.weights is None):
            raise ValueError("tracking objective needs 'u_nom' and 'weights'")
        return self


PolicyBlock = Annotated[
    Union[ChebyshevCenterBlock, QPTrackingBlock, LPVertexBlock, RotatingVertexBlock, SafetyProgramBlock],
    Field(discriminator="name"),
]


class SimBlock(_Strict):
    dt: float = Field(gt=0)
    T: float = Field(gt=0)
    integrator: Literal["euler", "rk4"] = "rk4"
    gamma: Union[Literal["auto"], Annotated[float, Field(ge=0)]] = "auto"
    rho: float = Field(default=DEFAULT_RHO, gt=0, lt=1)
    gamma_samples: int = Field(default=500, ge=1)
    violation_tol: float = Field(default=DEFAULT_VIOLATION_TOL, ge=0)
    record_margins: bool = True


class CertificationBlock(_Strict):
    boundary_samples: int = Field(default=DEFAULT_BOUNDARY_SAMPLES, ge=1)
    sweep_samples: int = Field(default=DEFAULT_SWEEP_SAMPLES, ge=1)
    intersection_starts: int = Field(default=DEFAULT_INTERSECTION_STARTS, ge=1)


class SampleStartsBlock(_Strict):
    sample: int = Field(ge=1)


class ScenarioFile(_Strict):
    name: str
    description: str = ""
    system: SystemBlock
    barriers: List[BarrierBlock] = Field(min_length=1)
    alphas: List[AlphaBlock] = Field(min_length=1)
    input: InputBlock
    bounding_box: Optional[BoundingBoxBlock] = None
    policy: Union[PolicyBlock, List[PolicyBlock]]
    sim: SimBlock
    certification: CertificationBlock = Field(default_factory=CertificationBlock)
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)
    x0: Union[Vector, SampleStartsBlock]

    @model_validator(mode="after")
    def _alphas_match_barriers(self):
        if len(self.alphas) != len(self.barriers):
            raise ValueError(f"{len(self.barriers)} barriers but {len(self.alphas)} alphas")
        return self

    @property
    def policy_blocks(self) -> List[Any]:
        return self.policy if isinstance(self.policy, list) else [self.policy]


# ------------------------- Loading ------------------------- #
def parse_scenario_text(text: str, source: str = "<string>") -> ScenarioFile:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(
            ErrorMessages.SCENARIO_PARSE_FAILED.format(path=source, error=e.msg),
            diagnostics=[{"line": e.lineno, "column": e.colno, "message": e.msg}],
        ) from e
    try:
        return ScenarioFile.model_validate(payload)
    except ValidationError as e:
        diagnostics = [
            {"field": ".".join(str(part) for part in err["loc"]), "message": err["msg"]}
            for err in e.errors()
        ]
        raise ScenarioError(
            ErrorMessages.SCENARIO_PARSE_FAILED.format(
                path=source, error=f"{len(diagnostics)} validation error(s)"
            ),
            diagnostics=diagnostics,
        ) from e


def load_scenario_file(path: Path) -> ScenarioFile:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(ErrorMessages.SCENARIO_NOT_FOUND.format(path=path))
    return parse_scenario_text(path.read_text(encoding="utf-8"), str(path))


# ------------------------- Building ------------------------- #
@dataclass
class Scenario:
    name: str
    source: ScenarioFile
    spec: SafetySpec
    sys: SystemDynamics
    policies: List[Tuple[str, Policy]]


def _build_system(block) -> SystemDynamics:
    if isinstance(block, SingleIntegratorBlock):
        return SystemDynamics.single_integrator(block.n, block.drift)
    if isinstance(block, LinearSystemBlock):
        return SystemDynamics.linear(block.F, block.G, block.d)
    if isinstance(block, DoubleIntegratorBlock):
        return SystemDynamics.double_integrator(block.dims)
    return SystemDynamics(
        F=block.F,
        d=block.d,
        G0=block.G,
        quadratic=tuple(np.asarray(Q, dtype=float) for Q in block.quadratic),
        input_gains=tuple(np.asarray(G, dtype=float) for G in block.input_gains),
        name="polynomial",
    )


def _build_barrier(block) -> Barrier:
    if isinstance(block, DiskBlock):
        return Barrier.disk(block.center, block.radius, name=block.name)
    if isinstance(block, QuadraticBlock):
        return Barrier.quadratic(block.center, block.shape, block.level, name=block.name)
    return Barrier.affine(
        block.normal, block.offset, acknowledge_noncompact=block.acknowledge_noncompact, name=block.name
    )


def _build_nominal(u_nom: NominalSpec):
    if isinstance(u_nom, NominalBlock):
        return NominalControl.linear(u_nom.K, u_nom.k0)
    return np.asarray(u_nom, dtype=float)


def _build_policy(block) -> Policy:
    if isinstance(block, ChebyshevCenterBlock):
        return make_policy(PolicyNames.CHEBYSHEV_CENTER)
    if isinstance(block, QPTrackingBlock):
        weights = None if block.weights is None else np.asarray(block.weights, dtype=float)
        return make_policy(PolicyNames.QP_TRACKING, u_nom=_build_nominal(block.u_nom), weights=weights)
    if isinstance(block, LPVertexBlock):
        return make_policy(PolicyNames.LP_VERTEX, c=block.cost)
    if isinstance(block, RotatingVertexBlock):
        return make_policy(PolicyNames.ROTATING_VERTEX, costs=block.costs, period=block.period)
    if block.objective == "linear":
        objective = LinearCost(c=np.asarray(block.cost, dtype=float))
    elif block.objective == "tracking":
        objective = Tracking(u_nom=_build_nominal(block.u_nom), weights=np.asarray(block.weights, dtype=float))
    else:
        objective = Feasibility()
    return make_policy(PolicyNames.SAFETY_PROGRAM, objective=objective)


def build_scenario(source: ScenarioFile, policy_override: Optional[str] = None) -> Scenario:
    try:
        sys = _build_system(source.system)
        barriers = [_build_barrier(b) for b in source.barriers]
        alphas = [AlphaFunction(kind=a.kind, k=a.k) for a in source.alphas]
        if isinstance(source.input, BoxInputBlock):
            input_set = box_input_polytope(sys.m, source.input.u_max)
        else:
            input_set = Polytope(source.input.A, source.input.b)
        box = None
        if source.bounding_box is not None:
            box = (np.asarray(source.bounding_box.lo, dtype=float), np.asarray(source.bounding_box.hi, dtype=float))
        spec = SafetySpec(barriers=barriers, alphas=alphas, input_set=input_set, bounding_box=box)
        check_system(spec, sys)
        if isinstance(source.x0, list) and len(source.x0) != spec.n:
            raise InvalidParameter(f"x0 has {len(source.x0)} entries, expected {spec.n}")

        blocks = source.policy_blocks
        if policy_override is not None:
            if policy_override not in PolicyNames.ALL:
                raise InvalidParameter(f"unknown policy '{policy_override}'; choose from {PolicyNames.ALL}")
            blocks = [b for b in blocks if b.name == policy_override]
            if not blocks:
                if policy_override != PolicyNames.CHEBYSHEV_CENTER:
                    raise InvalidParameter(
                        f"policy '{policy_override}' needs parameters the scenario does not provide"
                    )
                blocks = [ChebyshevCenterBlock(name=PolicyNames.CHEBYSHEV_CENTER)]
        policies = [(b.name, _build_policy(b)) for b in blocks]
    except (InvarianceError, ValueError) as e:
        raise ScenarioError(
            ErrorMessages.SCENARIO_PARSE_FAILED.format(path=source.name, error=e),
            diagnostics=[{"field": "", "message": str(e)}],
        ) from e
    return Scenario(name=source.name, source=source, spec=spec, sys=sys, policies=policies)


def load_scenario(path: Path, policy_override: Optional[str] = None) -> Scenario:
    return build_scenario(load_scenario_file(path), policy_override)


def resolve_gamma(scenario: Scenario, seed: int) -> float:
    """
    Configured gamma, or rho times the sampled minimum radius over int(S_I) when "auto".
    The "auto" path first checks that sampled S_I lies inside Omega.
    """
    sim = scenario.source.sim
    if sim.gamma != "auto":
        return float(sim.gamma)
    cover = check_domain_cover(scenario.spec, scenario.sys, sim.gamma_samples, seed)
    logger.info(
        f"domain cover: {cover.in_omega_count}/{cover.total} samples of S_I in Omega, "
        f"min radius {cover.min_radius:.6g}"
    )
    if not cover.covered:
        radius = cover.min_radius if np.isfinite(cover.min_radius) else None
        raise SampleOutsideOmega(
            ErrorMessages.SAMPLE_OUTSIDE_OMEGA.format(x=np.round(cover.worst_x, 12).tolist(), radius=radius),
            cover.worst_x,
            radius,
        )
    sampler = SafeSetSampler(scenario.spec, strict=True)
    return estimate_gamma(scenario.spec, scenario.sys, sampler, sim.rho, sim.gamma_samples, seed)


def start_states(scenario: Scenario, seed: int) -> List[np.ndarray]:
    """Initial states for one seed: the explicit x0, or samples of int(S_I) inside Omega."""
    x0 = scenario.source.x0
    if isinstance(x0, list):
        return [np.asarray(x0, dtype=float)]
    sampler = SafeSetSampler(scenario.spec, strict=True)
    starts: List[np.ndarray] = []
    attempt = 0
    while len(starts) < x0.sample:
        if attempt >= 10:
            raise InvalidParameter(f"could not draw {x0.sample} starts inside Omega")
        for x in sampler.sample(4 * x0.sample, seed + 7919 * attempt):
            if build_K(scenario.spec, scenario.sys, x).in_omega:
                starts.append(x)
                if len(starts) == x0.sample:
                    break
        attempt += 1
    return starts


def sim_config(scenario: Scenario, gamma: float, dt: Optional[float] = None) -> SimConfig:
    sim = scenario.source.sim
    return SimConfig(
        dt=sim.dt if dt is None else dt,
        T=sim.T,
        gamma=gamma,
        integrator=sim.integrator,
        violation_tol=sim.violation_tol,
        record_margins=sim.record_margins,
    )


def describe_diagnostics(error: ScenarioError) -> List[str]:
    lines = []
    for diag in error.diagnostics:
        where: Dict[str, Any] = {k: v for k, v in diag.items() if k != "message"}
        location = ", ".join(f"{k} {v}" for k, v in where.items() if v != "")
        lines.append(f"{location}: {diag['message']}" if location else diag["message"])
    return lines
