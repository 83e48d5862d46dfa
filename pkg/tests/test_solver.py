from itertools import combinations

import numpy as np
import pytest
from scipy.optimize import linprog

from shared.constants import SolveStatus
from shared.exceptions import DimensionMismatch, InvalidParameter
from invariance.solver import LinearProgram, QuadraticProgram, solve_lp, solve_qp


def _box_rows(n: int, bound: float):
    return np.vstack([np.eye(n), -np.eye(n)]), np.full(2 * n, bound)


HIGHS_STATUS = {0: SolveStatus.OPTIMAL, 2: SolveStatus.INFEASIBLE, 3: SolveStatus.UNBOUNDED}


def _random_rows(rng, n: int, rows: int, infeasible: bool):
    """Rows strictly satisfied by a random point; optionally end with a contradictory pair."""
    A = rng.standard_normal((rows, n))
    x_feasible = rng.uniform(-0.5, 0.5, n)
    b = A @ x_feasible + rng.uniform(0.05, 1.0, rows)
    if infeasible:
        a = rng.standard_normal(n)
        # a^T z <= -1 and a^T z >= 1
        A = np.vstack([A[:-2], a, -a])
        b = np.concatenate([b[:-2], [-1.0, -1.0]])
    return A, b


def _enumerated_qp_minimizer(Q, c, A, b):
    """Brute-force the active set: the unique KKT point of a strictly convex QP, or None."""
    n, m = len(c), len(b)
    for k in range(n + 1):
        for active in combinations(range(m), k):
            A_act = A[list(active)]
            if k and np.linalg.matrix_rank(A_act) < k:
                continue
            kkt = np.block([[Q, A_act.T], [A_act, np.zeros((k, k))]])
            sol = np.linalg.solve(kkt, np.concatenate([-c, b[list(active)]]))
            z, lam = sol[:n], sol[n:]
            if np.all(A @ z <= b + 1e-9) and np.all(lam >= -1e-9):
                return z
    return None


class TestSolveLP:
    def test_textbook_vertex(self):
        A = np.array([[1.0, 2.0], [3.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
        b = np.array([4.0, 6.0, 0.0, 0.0])
        outcome = solve_lp(LinearProgram(c=np.array([-1.0, -1.0]), A=A, b=b))
        assert outcome.status == SolveStatus.OPTIMAL
        assert np.allclose(outcome.point, [1.6, 1.2], atol=1e-9)
        assert outcome.objective == pytest.approx(-2.8, abs=1e-9)
        assert outcome.kkt_residual <= 1e-8

    def test_contradictory_rows_are_infeasible(self):
        outcome = solve_lp(LinearProgram(c=np.array([1.0]), A=np.array([[1.0], [-1.0]]), b=np.array([-1.0, -1.0])))
        assert outcome.status == SolveStatus.INFEASIBLE

    def test_half_line_is_unbounded(self):
        outcome = solve_lp(LinearProgram(c=np.array([-1.0]), A=np.array([[-1.0]]), b=np.array([0.0])))
        assert outcome.status == SolveStatus.UNBOUNDED

    def test_degenerate_cycling_example_terminates(self):
        # classic cycling instance for the largest-coefficient rule
        c = np.array([-0.75, 20.0, -0.5, 6.0])
        A = np.vstack(
            [
                [0.25, -8.0, -1.0, 9.0],
                [0.5, -12.0, -0.5, 3.0],
                [0.0, 0.0, 1.0, 0.0],
                -np.eye(4),
            ]
        )
        b = np.concatenate([[0.0, 0.0, 1.0], np.zeros(4)])
        outcome = solve_lp(LinearProgram(c=c, A=A, b=b))
        assert outcome.status == SolveStatus.OPTIMAL
        assert outcome.objective == pytest.approx(-1.25, abs=1e-9)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_highs_on_random_bounded_programs(self, seed):
        rng = np.random.default_rng(seed)
        n = 3
        A_rand = rng.standard_normal((6, n))
        x_feasible = rng.uniform(-0.5, 0.5, n)
        b_rand = A_rand @ x_feasible + rng.uniform(0.1, 1.0, 6)
        A_box, b_box = _box_rows(n, 2.0)
        A = np.vstack([A_rand, A_box])
        b = np.concatenate([b_rand, b_box])
        c = rng.standard_normal(n)

        outcome = solve_lp(LinearProgram(c=c, A=A, b=b))
        reference = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs")
        assert outcome.optimal and reference.status == 0
        assert outcome.objective == pytest.approx(reference.fun, abs=1e-7)
        assert np.all(A @ outcome.point <= b + 1e-8)
        assert outcome.kkt_residual <= 1e-6

    @pytest.mark.parametrize("seed", range(200))
    def test_random_programs_agree_with_highs(self, seed):
        rng = np.random.default_rng(1000 + seed)
        n = 2 + seed % 3
        A_rand, b_rand = _random_rows(rng, n, max(2, 8 - 2 * n), infeasible=seed % 5 == 0)
        A_box, b_box = _box_rows(n, 2.0)
        A = np.vstack([A_rand, A_box])
        b = np.concatenate([b_rand, b_box])
        c = rng.standard_normal(n)

        outcome = solve_lp(LinearProgram(c=c, A=A, b=b))
        reference = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs")
        assert outcome.status == HIGHS_STATUS[reference.status]
        if reference.status == 0:
            assert outcome.objective == pytest.approx(reference.fun, abs=1e-6)
            assert np.allclose(outcome.point, reference.x, atol=1e-5)

    def test_negative_right_hand_sides_go_through_phase_one(self):
        # 1 <= u <= 2
        outcome = solve_lp(LinearProgram(c=np.array([1.0]), A=np.array([[-1.0], [1.0]]), b=np.array([-1.0, 2.0])))
        assert outcome.optimal
        assert outcome.point[0] == pytest.approx(1.0, abs=1e-12)

    def test_shape_mismatch_is_rejected(self):
        with pytest.raises(DimensionMismatch):
            LinearProgram(c=np.zeros(2), A=np.zeros((3, 3)), b=np.zeros(3))


class TestSolveQP:
    def test_projection_onto_face(self):
        A, b = _box_rows(2, 1.0)
        y = np.array([2.0, 0.5])
        outcome = solve_qp(QuadraticProgram(Q=np.eye(2), c=-y, A=A, b=b))
        assert outcome.optimal
        assert np.allclose(outcome.point, [1.0, 0.5], atol=1e-9)
        assert outcome.multipliers[0] == pytest.approx(1.0, abs=1e-8)
        assert outcome.kkt_residual <= 1e-6

    @pytest.mark.parametrize("seed", range(10))
    def test_box_projection_is_clipping(self, seed):
        rng = np.random.default_rng(seed)
        A, b = _box_rows(3, 1.0)
        y = rng.uniform(-3.0, 3.0, 3)
        outcome = solve_qp(QuadraticProgram(Q=np.eye(3), c=-y, A=A, b=b))
        assert outcome.optimal
        assert np.allclose(outcome.point, np.clip(y, -1.0, 1.0), atol=1e-8)
        assert outcome.kkt_residual <= 1e-6

    def test_interior_minimizer(self):
        A, b = _box_rows(2, 1.0)
        outcome = solve_qp(QuadraticProgram(Q=np.eye(2), c=np.array([-0.2, -0.3]), A=A, b=b))
        assert np.allclose(outcome.point, [0.2, 0.3], atol=1e-9)

    def test_semidefinite_hessian_is_regularized(self):
        A, b = _box_rows(2, 1.0)
        outcome = solve_qp(QuadraticProgram(Q=np.diag([1.0, 0.0]), c=np.array([0.0, -1.0]), A=A, b=b))
        assert outcome.optimal
        assert outcome.regularized
        assert np.allclose(outcome.point, [0.0, 1.0], atol=1e-6)

    def test_infeasible_constraints(self):
        outcome = solve_qp(
            QuadraticProgram(Q=np.eye(1), c=np.zeros(1), A=np.array([[1.0], [-1.0]]), b=np.array([-1.0, -1.0]))
        )
        assert outcome.status == SolveStatus.INFEASIBLE

    @pytest.mark.parametrize("seed", range(200))
    def test_random_strictly_convex_programs(self, seed):
        rng = np.random.default_rng(5000 + seed)
        n = 2 + seed % 3
        m = int(rng.integers(n, 9))
        A, b = _random_rows(rng, n, m, infeasible=seed % 5 == 0)
        M = rng.standard_normal((n, n))
        Q = M @ M.T + 0.5 * np.eye(n)
        c = 3.0 * rng.standard_normal(n)

        outcome = solve_qp(QuadraticProgram(Q=Q, c=c, A=A, b=b))
        feasibility = linprog(np.zeros(n), A_ub=A, b_ub=b, bounds=[(None, None)] * n, method="highs")
        assert outcome.status == HIGHS_STATUS[feasibility.status]
        if feasibility.status == 0:
            expected = _enumerated_qp_minimizer(Q, c, A, b)
            assert expected is not None
            assert np.allclose(outcome.point, expected, atol=1e-5)
            assert outcome.objective == pytest.approx(0.5 * expected @ Q @ expected + c @ expected, abs=1e-6)

    def test_asymmetric_hessian_is_rejected(self):
        A, b = _box_rows(2, 1.0)
        with pytest.raises(InvalidParameter):
            QuadraticProgram(Q=np.array([[1.0, 1.0], [0.0, 1.0]]), c=np.zeros(2), A=A, b=b)
