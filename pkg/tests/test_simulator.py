import math

import numpy as np
import pytest

from shared.constants import ExitReason, PolicyEvents
from shared.exceptions import InvalidParameter, PreconditionViolated
from shared.scenario import load_scenario, resolve_gamma, sim_config, start_states
from invariance.barrier import AlphaFunction, Barrier, SystemDynamics
from invariance.feasible_map import SafetySpec
from invariance.geometry import box_input_polytope
from invariance.policy import ChebyshevCenter, LPVertex, QPTracking, RotatingVertex
from invariance.simulator import (
    EULER,
    RK4,
    SimConfig,
    replay,
    simulate,
    tangent_cone_check,
    trajectory_from_arrays,
    verify_invariance,
)

# positive root of 1 - s^2 - 0.5 s, where the lower end of K_gamma reaches zero
INTERVAL_REST = (-0.5 + math.sqrt(4.25)) / 2.0


@pytest.fixture
def exhausted_spec() -> SafetySpec:
    return SafetySpec(
        barriers=[Barrier.disk([0.0, 0.0], 1.0)],
        alphas=[AlphaFunction()],
        input_set=box_input_polytope(2, 0.5),
    )


@pytest.fixture
def radial_outflow() -> SystemDynamics:
    return SystemDynamics.linear(np.eye(2), np.eye(2))


class TestSimConfig:
    def test_step_count(self):
        assert SimConfig(dt=1e-3, T=5.0, gamma=0.1).n_steps == 5000

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"dt": 0.0, "T": 1.0, "gamma": 0.1},
            {"dt": 2.0, "T": 1.0, "gamma": 0.1},
            {"dt": 1e-9, "T": 100.0, "gamma": 0.1},
            {"dt": 0.1, "T": 1.0, "gamma": -0.1},
            {"dt": 0.1, "T": 1.0, "gamma": 0.1, "integrator": "leapfrog"},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidParameter):
            SimConfig(**kwargs)


class TestIntervalRuns:
    def test_center_keeps_state_at_origin(self, interval_spec, integrator_1d):
        traj, report = simulate(
            interval_spec, integrator_1d, ChebyshevCenter(), [0.0], SimConfig(dt=1e-3, T=1.0, gamma=0.25)
        )
        assert traj.states.shape == (1001, 1)
        assert traj.controls.shape == (1000, 1)
        assert traj.times[-1] == pytest.approx(1.0)
        assert np.max(np.abs(traj.states)) <= 1e-3
        assert report.ok
        assert report.exit_reason == ExitReason.COMPLETED
        assert report.exit_step == 1000

    def test_vertex_settles_where_lower_bound_vanishes(self, interval_spec, integrator_1d):
        traj, report = simulate(
            interval_spec, integrator_1d, LPVertex(c=np.array([1.0])), [0.0], SimConfig(dt=1e-2, T=5.0, gamma=0.25)
        )
        assert report.ok
        assert max(report.max_h) <= 1e-6
        assert traj.states[-1, 0] < 0.0
        assert abs(abs(traj.states[-1, 0]) - INTERVAL_REST) < 0.01
        assert verify_invariance(traj, interval_spec).ok
        assert tangent_cone_check(interval_spec, integrator_1d, traj).ok

    def test_euler_replay_is_exact(self, interval_spec, integrator_1d):
        cfg = SimConfig(dt=1e-2, T=0.5, gamma=0.25, integrator=EULER)
        traj, _ = simulate(interval_spec, integrator_1d, LPVertex(c=np.array([1.0])), [0.2], cfg)
        assert np.array_equal(replay(integrator_1d, [0.2], traj.controls, cfg.dt, EULER), traj.states)

    def test_rk4_replay_matches(self, interval_spec, integrator_1d):
        cfg = SimConfig(dt=1e-2, T=0.5, gamma=0.25, integrator=RK4)
        traj, _ = simulate(interval_spec, integrator_1d, RotatingVertex(costs=([1.0], [-1.0])), [0.2], cfg)
        assert np.allclose(replay(integrator_1d, [0.2], traj.controls, cfg.dt, RK4), traj.states, atol=1e-12)

    def test_margins_can_be_skipped(self, interval_spec, integrator_1d):
        cfg = SimConfig(dt=1e-2, T=0.1, gamma=0.25, record_margins=False)
        traj, report = simulate(interval_spec, integrator_1d, ChebyshevCenter(), [0.0], cfg)
        assert np.all(np.isnan(traj.cheb_radii))
        assert math.isfinite(report.min_cheb_radius)

    def test_boundary_start_is_rejected(self, interval_spec, integrator_1d):
        with pytest.raises(PreconditionViolated):
            simulate(interval_spec, integrator_1d, ChebyshevCenter(), [1.0], SimConfig(dt=0.1, T=1.0, gamma=0.1))


class TestExhaustedAuthority:
    def test_start_outside_omega(self, exhausted_spec, radial_outflow):
        with pytest.raises(PreconditionViolated):
            simulate(
                exhausted_spec, radial_outflow, ChebyshevCenter(), [0.95, 0.0], SimConfig(dt=0.01, T=1.0, gamma=0.01)
            )

    def test_run_stops_when_feasible_set_runs_out(self, exhausted_spec, radial_outflow):
        cfg = SimConfig(dt=0.01, T=5.0, gamma=0.01)
        traj, report = simulate(exhausted_spec, radial_outflow, ChebyshevCenter(), [0.1, 0.0], cfg)
        assert report.exit_reason in (ExitReason.LEFT_OMEGA, ExitReason.INFEASIBLE_SELECTION)
        assert not report.ok
        assert report.exit_step < cfg.n_steps
        assert traj.states.shape[0] == report.exit_step + 1
        assert traj.controls.shape[0] == report.exit_step


class TestTwoDiskRuns:
    @pytest.mark.parametrize(
        "policy",
        [
            ChebyshevCenter(),
            QPTracking(u_nom=np.array([1.0, 0.5])),
            LPVertex(c=np.array([1.0, 0.0])),
            RotatingVertex(costs=([1.0, 1.0], [-1.0, -1.0])),
        ],
        ids=lambda p: p.name,
    )
    def test_policies_stay_safe(self, two_disk_spec, integrator_2d, policy):
        traj, report = simulate(
            two_disk_spec, integrator_2d, policy, [0.1, 0.2], SimConfig(dt=1e-2, T=1.0, gamma=0.2)
        )
        assert report.ok
        assert max(report.max_h) <= 1e-6
        assert report.min_cheb_radius > 0.2
        assert verify_invariance(traj, two_disk_spec).ok
        assert tangent_cone_check(two_disk_spec, integrator_2d, traj).ok

    def test_rotating_vertex_logs_switches(self, two_disk_spec, integrator_2d):
        traj, _ = simulate(
            two_disk_spec,
            integrator_2d,
            RotatingVertex(costs=([1.0, 1.0], [-1.0, -1.0])),
            [0.0, 0.0],
            SimConfig(dt=1e-2, T=0.1, gamma=0.2),
        )
        assert traj.policy_events == [(k, PolicyEvents.COST_SWITCH) for k in range(1, 10)]

    def test_rotating_vertex_jumps_across_half_the_input_set(self, two_disk_spec, integrator_2d):
        traj, report = simulate(
            two_disk_spec,
            integrator_2d,
            RotatingVertex(costs=([1.0, 1.0], [-1.0, -1.0])),
            [0.0, 0.0],
            SimConfig(dt=1e-2, T=1.0, gamma=0.2),
        )
        assert report.ok
        jumps = np.linalg.norm(np.diff(traj.controls, axis=0), axis=1)
        # diam(U) of the unit box is 2 * sqrt(2)
        assert np.max(jumps) >= 0.5 * 2.0 * math.sqrt(2.0)

    @pytest.mark.slow
    @pytest.mark.parametrize("dt", [2e-2, 1e-2, 5e-3])
    def test_refined_steps_stay_safe(self, two_disk_spec, integrator_2d, dt):
        _, report = simulate(
            two_disk_spec,
            integrator_2d,
            QPTracking(u_nom=np.array([1.0, 0.5])),
            [0.0, 0.0],
            SimConfig(dt=dt, T=5.0, gamma=0.2),
        )
        assert report.ok
        assert max(report.max_h) <= 1e-6

    @pytest.mark.slow
    def test_halving_dt_does_not_raise_worst_h(self, scenarios_dir):
        scenario = load_scenario(scenarios_dir / "two_disk.json")
        gamma = resolve_gamma(scenario, seed=7)
        for name, policy in scenario.policies:
            for x0 in start_states(scenario, seed=7)[:5]:
                worst = []
                for dt in (1e-3, 5e-4):
                    _, report = simulate(
                        scenario.spec, scenario.sys, policy, x0, sim_config(scenario, gamma, dt=dt)
                    )
                    assert report.ok, name
                    worst.append(max(report.max_h))
                assert worst[1] <= worst[0] + 1e-9, name


class TestPostHocChecks:
    def test_verify_flags_outside_state(self, two_disk_spec):
        states = [[0.0, 0.0], [0.1, 0.0], [1.6, 0.0]]
        traj = trajectory_from_arrays(two_disk_spec, [0.0, 0.1, 0.2], states, [[1.0, 0.0], [1.0, 0.0]])
        check = verify_invariance(traj, two_disk_spec)
        assert not check.ok
        assert check.worst_step == 2
        assert check.worst_barrier == 1
        assert check.worst_h == pytest.approx(0.21)

    def test_outward_control_on_boundary(self, interval_spec, integrator_1d):
        traj = trajectory_from_arrays(interval_spec, [0.0, 0.01], [[1.0], [1.005]], [[0.5]])
        report = tangent_cone_check(interval_spec, integrator_1d, traj)
        assert report.checked == 1
        assert {v.kind for v in report.violations} == {"barrier_row", "tangent_cone"}

    def test_inward_control_on_boundary(self, interval_spec, integrator_1d):
        traj = trajectory_from_arrays(interval_spec, [0.0, 0.01], [[1.0], [0.9975]], [[-0.25]])
        report = tangent_cone_check(interval_spec, integrator_1d, traj)
        assert report.checked == 1
        assert report.ok

    def test_states_far_from_boundary_are_skipped(self, interval_spec, integrator_1d):
        traj = trajectory_from_arrays(interval_spec, [0.0, 0.01], [[0.0], [0.01]], [[1.0]])
        assert tangent_cone_check(interval_spec, integrator_1d, traj).checked == 0
