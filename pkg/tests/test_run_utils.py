import json

import numpy as np
import pytest

from shared.constants import ExitReason, FieldNames
from shared.exceptions import DimensionMismatch
from shared.models import create_case_summary, create_run_report_payload, create_summary_payload
from invariance.barrier import Barrier
from invariance.policy import LPVertex
from invariance.simulator import RunReport, SimConfig, simulate
from runner.run_utils import (
    read_trajectory_csv,
    trajectory_csv_text,
    trajectory_header,
    write_json_atomic,
    write_text_atomic,
)
from runner.svg_plot import barrier_curve, render_svg


def _report(max_h, exit_reason=ExitReason.COMPLETED, violations=()):
    return RunReport(
        max_h=list(max_h),
        min_cheb_radius=0.5,
        violations=list(violations),
        exit_reason=exit_reason,
        exit_step=10,
        wall_time=0.123,
    )


class TestTrajectoryCsv:
    def test_header(self):
        assert trajectory_header(2, 1, 2) == ["t", "x1", "x2", "u1", "h1", "h2", "rc"]

    def test_written_run_reads_back(self, two_disk_spec, integrator_2d, tmp_path):
        traj, _ = simulate(
            two_disk_spec, integrator_2d, LPVertex(c=np.array([1.0, 0.0])), [0.1, 0.2], SimConfig(dt=0.05, T=0.5, gamma=0.2)
        )
        path = tmp_path / "run.csv"
        write_text_atomic(path, trajectory_csv_text(traj))
        lines = path.read_text().splitlines()
        # final row has empty control cells
        assert lines[-1].split(",")[3:5] == ["", ""]
        columns = read_trajectory_csv(path)
        assert np.array_equal(columns.states, traj.states)
        assert np.array_equal(columns.controls, traj.controls)
        assert np.array_equal(columns.h_values, traj.h_values)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_trajectory_csv(tmp_path / "absent.csv")

    def test_header_only(self, tmp_path):
        path = tmp_path / "header.csv"
        path.write_text("t,x1,u1,h1,rc\n")
        with pytest.raises(ValueError):
            read_trajectory_csv(path)

    def test_unexpected_column(self, tmp_path):
        path = tmp_path / "odd.csv"
        path.write_text("t,x1,u1,h1,x_vel\n0,0,0,-1,1\n0.1,0,,-1,\n")
        with pytest.raises(ValueError):
            read_trajectory_csv(path)


class TestAtomicOutput:
    def test_no_temporary_files_left(self, tmp_path):
        write_json_atomic(tmp_path / "out.json", {"a": 1})
        write_json_atomic(tmp_path / "out.json", {"a": 2})
        assert [p.name for p in tmp_path.iterdir()] == ["out.json"]
        assert json.loads((tmp_path / "out.json").read_text()) == {"a": 2}

    def test_nan_is_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_json_atomic(tmp_path / "bad.json", {"a": float("nan")})


class TestPayloads:
    def test_wall_time_is_opt_in(self):
        report = _report([-0.5])
        assert create_run_report_payload(report, [], True, 0.2)[FieldNames.WALL_TIME] is None
        assert create_run_report_payload(report, [], True, 0.2, include_wall_time=True)[FieldNames.WALL_TIME] == 0.123

    def test_violations_and_events(self):
        report = _report([0.01], violations=[(3, 0, 0.01)])
        payload = create_run_report_payload(report, [(2, "cost_switch")], False, 0.1)
        assert payload[FieldNames.VIOLATIONS] == [{"step": 3, "barrier": 0, "value": 0.01}]
        assert payload[FieldNames.POLICY_EVENTS] == [[2, "cost_switch"]]

    def test_summary_aggregates_cases(self):
        cases = [
            create_case_summary("a", "lp_vertex", 0, [0.0], _report([-0.4, -0.2])),
            create_case_summary("b", "lp_vertex", 0, [0.1], _report([-0.3], ExitReason.LEFT_OMEGA)),
        ]
        summary = create_summary_payload("demo", 0.2, True, cases)
        assert summary[FieldNames.WORST_H] == -0.2
        assert not summary[FieldNames.ALL_COMPLETED]

    def test_empty_summary(self):
        summary = create_summary_payload("demo", 0.2, True, [])
        assert summary[FieldNames.WORST_H] is None
        assert summary[FieldNames.ALL_COMPLETED]


class TestSvg:
    def test_disk_curve_is_closed(self):
        curve = barrier_curve(Barrier.disk([1.0, 2.0], 0.5), np.array([-5.0, -5.0]), np.array([5.0, 5.0]))
        assert np.allclose(curve[0], curve[-1])
        assert np.allclose(np.linalg.norm(curve - [1.0, 2.0], axis=1), 0.5)

    def test_affine_curve_is_clipped(self):
        h = Barrier.affine([0.0, 1.0], 0.5, acknowledge_noncompact=True)
        curve = barrier_curve(h, np.array([-1.0, -1.0]), np.array([1.0, 1.0]))
        assert len(curve) > 0
        assert np.all(np.abs(curve[:, 0]) <= 1.0)
        assert np.allclose(curve[:, 1], 0.5)

    def test_render(self, two_disk_spec):
        svg = render_svg(two_disk_spec, [[0.0, 0.0], [0.1, 0.1], [0.2, 0.1]])
        assert svg.startswith('<?xml version="1.0"')
        assert svg.count("<polyline") == 3
        assert svg == render_svg(two_disk_spec, [[0.0, 0.0], [0.1, 0.1], [0.2, 0.1]])

    def test_render_needs_planar_spec(self, interval_spec):
        with pytest.raises(DimensionMismatch):
            render_svg(interval_spec, [[0.0], [0.1]])
