import numpy as np
import pytest

from shared.constants import DELTA_MAX, FEASIBILITY_INTERIOR_FRACTION, SolveStatus
from shared.exceptions import DimensionMismatch, InvalidParameter, PreconditionViolated, SolverFailure
from invariance.barrier import AlphaFunction, Barrier, SystemDynamics
from invariance.feasible_map import SafetySpec
from invariance.geometry import box_input_polytope, contains
from invariance.solver import SolveOutcome
from invariance.safety_program import (
    Feasibility,
    LinearCost,
    NominalControl,
    Tracking,
    check_solution,
    lifted_polytope,
    slack_witness,
    solve_safety_program,
)


class TestLiftedPolytope:
    def test_row_layout(self, two_disk_spec, integrator_2d):
        lifted = lifted_polytope(two_disk_spec, integrator_2d, [0.0, 0.0])
        # input rows, barrier rows, delta >= 0, delta <= cap
        assert lifted.A.shape == (4 + 2 + 2 + 2, 2 + 2)
        assert np.allclose(lifted.A[4], [1.0, 0.0, -0.75, 0.0])
        assert np.allclose(lifted.b[-2:], DELTA_MAX)

    def test_any_input_with_large_slack_is_feasible(self, two_disk_spec, integrator_2d):
        lifted = lifted_polytope(two_disk_spec, integrator_2d, [0.1, 0.2])
        assert contains(lifted, [1.0, -1.0, 100.0, 100.0], 1e-9)


class TestSolveSafetyProgram:
    def test_tracking_near_interval_boundary(self, interval_spec, integrator_1d):
        # stationarity with the barrier row active: v = 1 - 1.8 lam, delta = 0.19 lam
        lam = 1.8 / (1.8**2 + 0.19**2)
        result = solve_safety_program(interval_spec, integrator_1d, [0.9], Tracking(u_nom=[1.0], weights=[1.0]))
        assert result.optimal
        assert result.v[0] == pytest.approx(1.0 - 1.8 * lam, abs=1e-8)
        assert result.delta[0] == pytest.approx(0.19 * lam, abs=1e-8)
        assert result.v[0] == pytest.approx(0.011019, abs=1e-6)
        assert result.delta[0] == pytest.approx(0.104392, abs=1e-6)

    def test_feasibility_has_interior(self, interval_spec, integrator_1d):
        result = solve_safety_program(interval_spec, integrator_1d, [0.9], Feasibility())
        assert result.optimal
        assert result.lifted_radius > 0.0
        assert contains(interval_spec.input_set, result.v)

    def test_linear_cost(self, interval_spec, integrator_1d):
        result = solve_safety_program(interval_spec, integrator_1d, [0.9], LinearCost(c=np.array([1.0, 0.0])))
        assert result.optimal
        assert result.v[0] == pytest.approx(-1.0, abs=1e-9)
        assert result.delta[0] >= 0.0

    def test_linear_cost_dimension(self, interval_spec, integrator_1d):
        with pytest.raises(DimensionMismatch):
            solve_safety_program(interval_spec, integrator_1d, [0.5], LinearCost(c=np.array([1.0])))

    def test_tracking_weights_positive(self, interval_spec, integrator_1d):
        with pytest.raises(InvalidParameter):
            solve_safety_program(interval_spec, integrator_1d, [0.5], Tracking(u_nom=[0.0], weights=[0.0]))

    def test_nominal_feedback(self, two_disk_spec, integrator_2d):
        nominal = NominalControl.linear(-np.eye(2), [0.2, 0.2])
        assert np.allclose(nominal([0.1, -0.1]), [0.1, 0.3])
        result = solve_safety_program(two_disk_spec, integrator_2d, [0.0, 0.0], Tracking(nominal, [1.0, 1.0]))
        assert result.optimal
        assert result.v[1] == pytest.approx(0.2, abs=1e-8)

    def test_infeasible_outside_safe_set(self, caplog):
        spec = SafetySpec(
            barriers=[Barrier.disk([0.0, 0.0], 1.0)],
            alphas=[AlphaFunction()],
            input_set=box_input_polytope(2, 0.5),
        )
        sys = SystemDynamics.linear(np.eye(2), np.eye(2))
        result = solve_safety_program(spec, sys, [2.0, 0.0], Feasibility())
        assert result.status == SolveStatus.INFEASIBLE
        assert result.v is None
        assert "infeasible" in caplog.text

    @pytest.mark.parametrize("seed", range(5))
    def test_feasible_at_interior_points(self, two_disk_spec, integrator_2d, seed):
        rng = np.random.default_rng(seed)
        x = rng.uniform([-0.2, -0.3], [0.2, 0.3])
        result = solve_safety_program(two_disk_spec, integrator_2d, x, Feasibility())
        assert result.optimal
        assert result.lifted_radius > 0.0

    @pytest.mark.parametrize("x", [[0.1, 0.2], [-0.3, 0.0], [0.0, 0.7]])
    def test_feasibility_keeps_interior_margin(self, two_disk_spec, integrator_2d, x):
        result = solve_safety_program(two_disk_spec, integrator_2d, x, Feasibility())
        lifted = lifted_polytope(two_disk_spec, integrator_2d, x)
        slack = lifted.b - lifted.A @ np.concatenate([result.v, result.delta])
        required = FEASIBILITY_INTERIOR_FRACTION * result.lifted_radius * lifted.row_norms()
        assert result.optimal
        assert np.all(slack >= required - 1e-9)

    def test_bad_solver_point_is_not_optimal(self, interval_spec, integrator_1d, monkeypatch):
        # v = 1 with no slack breaks the barrier row 1.8 v - 0.19 delta <= 0 at x = 0.9
        bad = SolveOutcome(status=SolveStatus.OPTIMAL, point=np.array([1.0, 0.0]), objective=1.0)
        monkeypatch.setattr("invariance.safety_program.solve_lp", lambda lp: bad)
        with pytest.raises(SolverFailure, match="residual"):
            solve_safety_program(interval_spec, integrator_1d, [0.9], LinearCost(c=np.array([1.0, 0.0])))


class TestSlackWitness:
    def test_interval_witness(self, interval_spec, integrator_1d):
        witness = slack_witness(interval_spec, integrator_1d, [0.9], [0.5])
        assert witness.delta_bar[0] == pytest.approx(0.9 / 0.19)
        assert witness.delta_hat[0] == pytest.approx(0.9 / 0.19 + 1.0)
        assert witness.residuals[0] == pytest.approx(-0.19)
        assert np.all(witness.residuals < 0.0)

    @pytest.mark.parametrize("seed", range(5))
    def test_residuals_strictly_negative(self, two_disk_spec, integrator_2d, seed):
        rng = np.random.default_rng(seed)
        x = rng.uniform([-0.2, -0.3], [0.2, 0.3])
        v = rng.uniform(-1.0, 1.0, 2)
        witness = slack_witness(two_disk_spec, integrator_2d, x, v, margin=0.5)
        assert np.all(witness.residuals < 0.0)
        assert np.all(witness.delta_hat > 0.0)

    def test_boundary_point(self, interval_spec, integrator_1d):
        with pytest.raises(PreconditionViolated):
            slack_witness(interval_spec, integrator_1d, [1.0], [0.0])

    def test_control_outside_input_set(self, interval_spec, integrator_1d):
        with pytest.raises(InvalidParameter):
            slack_witness(interval_spec, integrator_1d, [0.5], [2.0])


class TestCheckSolution:
    def test_accepts_program_output(self, interval_spec, integrator_1d):
        result = solve_safety_program(interval_spec, integrator_1d, [0.9], Feasibility())
        check_solution(interval_spec, integrator_1d, [0.9], result.v, result.delta, lifted_radius=result.lifted_radius)

    def test_input_outside_set(self, interval_spec, integrator_1d):
        with pytest.raises(SolverFailure, match="input set"):
            check_solution(interval_spec, integrator_1d, [0.5], [2.0], [0.0])

    def test_barrier_residual(self, interval_spec, integrator_1d):
        with pytest.raises(SolverFailure, match="barrier row 0"):
            check_solution(interval_spec, integrator_1d, [0.9], [1.0], [0.0])

    def test_negative_slack(self, interval_spec, integrator_1d):
        with pytest.raises(SolverFailure):
            check_solution(interval_spec, integrator_1d, [0.0], [0.0], [-0.1])

    def test_interior_margin(self, interval_spec, integrator_1d):
        # v = -1 sits on the input boundary: C1/C3 hold but no interior margin is left
        check_solution(interval_spec, integrator_1d, [0.9], [-1.0], [1.0])
        with pytest.raises(SolverFailure, match="interior margin"):
            check_solution(interval_spec, integrator_1d, [0.9], [-1.0], [1.0], lifted_radius=0.1)
