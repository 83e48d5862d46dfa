"""
simulator.py

Sample-and-hold closed-loop simulation: the control is chosen once per step
from K_gamma(x_k) and held constant while the dynamics are integrated over
[t_k, t_k + dt].
"""

import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from shared.constants import (
    CONE_TOL,
    DEFAULT_CONE_BAND,
    DEFAULT_VIOLATION_TOL,
    MAX_SIM_STEPS,
    ExitReason,
)
from shared.exceptions import (
    DimensionMismatch,
    EmptyFeasibleSet,
    InvalidParameter,
    PreconditionViolated,
    SolverFailure,
)
from shared.logger import get_logger
from invariance.barrier import SystemDynamics, grad_h
from invariance.feasible_map import SafetySpec, build_K, check_system
from invariance.policy import Policy, select

logger = get_logger(__name__)

EULER = "euler"
RK4 = "rk4"


@dataclass(frozen=True)
class SimConfig:
    dt: float
    T: float
    gamma: float
    integrator: str = RK4
    violation_tol: float = DEFAULT_VIOLATION_TOL
    record_margins: bool = True

    def __post_init__(self):
        if not (self.dt > 0 and self.T > 0):
            raise InvalidParameter(f"dt and T must be positive, got dt={self.dt}, T={self.T}")
        if self.dt > self.T:
            raise InvalidParameter(f"dt={self.dt} exceeds horizon T={self.T}")
        if self.T / self.dt > MAX_SIM_STEPS:
            raise InvalidParameter(f"T/dt exceeds {MAX_SIM_STEPS} steps")
        if self.integrator not in (EULER, RK4):
            raise InvalidParameter(f"unknown integrator '{self.integrator}'")
        if self.gamma < 0:
            raise InvalidParameter(f"gamma must be nonnegative, got {self.gamma}")
        if not self.violation_tol >= 0:
            raise InvalidParameter("violation_tol must be nonnegative")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.T / self.dt)))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    # one row per completed step; the final state has no control
    controls: np.ndarray
    h_values: np.ndarray
    cheb_radii: np.ndarray
    policy_events: List[Tuple[int, str]] = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return self.controls.shape[0]


@dataclass
class RunReport:
    max_h: List[float]
    min_cheb_radius: float
    violations: List[Tuple[int, int, float]]
    exit_reason: str
    exit_step: int
    wall_time: float

    @property
    def ok(self) -> bool:
        return self.exit_reason == ExitReason.COMPLETED and not self.violations


# ------------------------- Integrators ------------------------- #
def _euler(field_fn: Callable, x: np.ndarray, dt: float) -> np.ndarray:
    return x + dt * field_fn(x)


def _rk4(field_fn: Callable, x: np.ndarray, dt: float) -> np.ndarray:
    k1 = field_fn(x)
    k2 = field_fn(x + 0.5 * dt * k1)
    k3 = field_fn(x + 0.5 * dt * k2)
    k4 = field_fn(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


INTEGRATORS: Dict[str, Callable] = {EULER: _euler, RK4: _rk4}


def hold_step(sys: SystemDynamics, x: np.ndarray, u: np.ndarray, dt: float, integrator: str = RK4) -> np.ndarray:
    """One integration step of x' = f(x) + g(x) u with u held constant."""
    return INTEGRATORS[integrator](lambda y: sys.vector_field(y, u), x, dt)


def replay(
    sys: SystemDynamics,
    x0,
    controls: np.ndarray,
    dt: float,
    integrator: str = RK4,
) -> np.ndarray:
    """Re-integrate logged controls from x0; returns the state sequence."""
    x = np.asarray(x0, dtype=float)
    states = [x]
    for u in np.atleast_2d(controls):
        x = hold_step(sys, x, u, dt, integrator)
        states.append(x)
    return np.array(states)


# ------------------------- Simulation ------------------------- #
def simulate(
    spec: SafetySpec,
    sys: SystemDynamics,
    policy: Policy,
    x0,
    cfg: SimConfig,
) -> Tuple[Trajectory, RunReport]:
    check_system(spec, sys)
    x = np.atleast_1d(np.asarray(x0, dtype=float)).reshape(-1)
    if x.shape[0] != spec.n:
        raise DimensionMismatch(f"x0 has {x.shape[0]} entries, expected {spec.n}")
    h0 = spec.h_values(x)
    if np.any(h0 >= 0.0):
        raise PreconditionViolated(
            f"x0={x.tolist()} is not in the interior of the safe set (h={h0.tolist()})",
            condition="h_i(x0) < 0 for all i",
        )
    first = build_K(spec, sys, x)
    if not first.in_omega:
        raise PreconditionViolated(
            f"x0={x.tolist()} is outside Omega", condition="K(x0) has nonempty interior"
        )

    started = time.perf_counter()
    states = [x]
    controls: List[np.ndarray] = []
    radii = [first.cheb.radius]
    events: List[Tuple[int, str]] = []
    exit_reason = ExitReason.COMPLETED
    exit_step = cfg.n_steps

    for k in range(cfg.n_steps):
        if k > 0:
            result = build_K(spec, sys, x)
            radii[-1] = result.cheb.radius if result.cheb.feasible else 0.0
            if not result.in_omega:
                exit_reason, exit_step = ExitReason.LEFT_OMEGA, k
                break
        try:
            selection = select(policy, spec, sys, x, k, cfg.gamma)
        except EmptyFeasibleSet as e:
            logger.warning(f"step {k}: {e}")
            exit_reason, exit_step = ExitReason.INFEASIBLE_SELECTION, k
            break
        except SolverFailure as e:
            raise e.at_step(k) from e
        events.extend((k, tag) for tag in selection.events)
        x = hold_step(sys, x, selection.u, cfg.dt, cfg.integrator)
        controls.append(selection.u)
        states.append(x)
        radii.append(np.nan)

    if exit_reason == ExitReason.COMPLETED:
        last = build_K(spec, sys, x)
        radii[-1] = last.cheb.radius if last.cheb.feasible else 0.0
        if not last.in_omega:
            exit_reason, exit_step = ExitReason.LEFT_OMEGA, cfg.n_steps

    states_arr = np.array(states)
    h_values = np.array([spec.h_values(s) for s in states_arr])
    radii_arr = np.array(radii, dtype=float)
    trajectory = Trajectory(
        times=cfg.dt * np.arange(states_arr.shape[0]),
        states=states_arr,
        controls=np.array(controls).reshape(len(controls), spec.m),
        h_values=h_values,
        cheb_radii=radii_arr if cfg.record_margins else np.full_like(radii_arr, np.nan),
        policy_events=events,
    )

    violations = [
        (int(k), int(i), float(h_values[k, i]))
        for k, i in zip(*np.nonzero(h_values > cfg.violation_tol))
    ]
    finite = radii_arr[np.isfinite(radii_arr)]
    report = RunReport(
        max_h=h_values.max(axis=0).tolist(),
        min_cheb_radius=float(finite.min()) if finite.size else float("nan"),
        violations=violations,
        exit_reason=exit_reason,
        exit_step=int(exit_step),
        wall_time=time.perf_counter() - started,
    )
    if exit_reason != ExitReason.COMPLETED:
        logger.warning(f"{policy.name}: run ended with {exit_reason} at step {exit_step}")
    if violations:
        logger.error(f"{policy.name}: {len(violations)} barrier violations above {cfg.violation_tol:g}")
    return trajectory, report


# ------------------------- Post-hoc checks ------------------------- #
@dataclass(frozen=True)
class InvarianceCheck:
    ok: bool
    worst_h: float
    worst_step: int
    worst_barrier: int


def verify_invariance(traj: Trajectory, spec: SafetySpec, tol: float = DEFAULT_VIOLATION_TOL) -> InvarianceCheck:
    """Recompute h_i on every logged state and compare against tol."""
    h = np.array([spec.h_values(s) for s in traj.states])
    k, i = np.unravel_index(int(np.argmax(h)), h.shape)
    worst = float(h[k, i])
    return InvarianceCheck(ok=worst <= tol, worst_h=worst, worst_step=int(k), worst_barrier=int(i))


@dataclass(frozen=True)
class ConeViolation:
    step: int
    barrier: int
    value: float
    # "barrier_row": grad h . xdot + alpha(h) > 0; "tangent_cone": grad h . xdot > 0 on the boundary
    kind: str


@dataclass
class ConeCheckReport:
    checked: int
    violations: List[ConeViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def tangent_cone_check(
    spec: SafetySpec,
    sys: SystemDynamics,
    traj: Trajectory,
    band: float = DEFAULT_CONE_BAND,
) -> ConeCheckReport:
    """
    At every step whose state lies within `band` of some boundary, check that
    the held control satisfies that barrier's row and, on the boundary
    itself, points into the tangent cone.
    """
    check_system(spec, sys)
    report = ConeCheckReport(checked=0)
    for k in range(traj.n_steps):
        x, u = traj.states[k], traj.controls[k]
        xdot = sys.vector_field(x, u)
        for i, (h, alpha) in enumerate(zip(spec.barriers, spec.alphas)):
            value = traj.h_values[k, i]
            if abs(value) > band:
                continue
            report.checked += 1
            rate = float(grad_h(h, x) @ xdot)
            if rate + alpha(value) > CONE_TOL:
                report.violations.append(ConeViolation(k, i, rate + alpha(value), "barrier_row"))
            if abs(value) <= CONE_TOL and rate > CONE_TOL:
                report.violations.append(ConeViolation(k, i, rate, "tangent_cone"))
    return report


def trajectory_from_arrays(
    spec: SafetySpec,
    times: Sequence[float],
    states: np.ndarray,
    controls: np.ndarray,
    cheb_radii: Optional[Sequence[float]] = None,
) -> Trajectory:
    """Rebuild a Trajectory from logged columns, recomputing h."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    radii = np.full(states.shape[0], np.nan) if cheb_radii is None else np.asarray(cheb_radii, dtype=float)
    return Trajectory(
        times=np.asarray(times, dtype=float),
        states=states,
        controls=np.asarray(controls, dtype=float).reshape(-1, spec.m),
        h_values=np.array([spec.h_values(s) for s in states]),
        cheb_radii=radii,
    )
