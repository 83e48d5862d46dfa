"""
models.py

Serialized payload structures for run reports, certification reports and
run summaries. Keeps the JSON written by the runner consistent with what
`verify` and the tests read back.
"""

import math
from typing import Any, List, Optional, Sequence, Tuple, TypedDict

from shared.constants import ExitReason, FieldNames


class ViolationEntry(TypedDict):
    step: int
    barrier: int
    value: float


class RunReportPayload(TypedDict):
    """Structure for <case_id>_report.json"""

    max_h: List[float]
    min_cheb_radius: Optional[float]
    violations: List[ViolationEntry]
    exit_reason: str
    exit_step: int
    wall_time: Optional[float]
    policy_events: List[List[Any]]
    certified: bool
    gamma: float


# "pass" is a keyword, hence the functional form
TransversalityPayload = TypedDict(
    "TransversalityPayload",
    {
        "point": List[float],
        "pair": List[int],
        "cos_angle": Optional[float],
        "pass": bool,
        "degenerate": bool,
    },
)


class CertificationPayload(TypedDict):
    """Structure printed by `check` and embedded in summary.json"""

    strict_cbf: List[float]
    transversality: List[TransversalityPayload]
    feasibility_sweep: dict
    gradient_sigma_min: List[float]
    certified: bool
    failures: List[str]


class CaseSummary(TypedDict):
    case_id: str
    policy: str
    seed: int
    x0: List[float]
    exit_reason: str
    worst_h: float
    violations: int


class SummaryPayload(TypedDict):
    """Structure for summary.json"""

    scenario: str
    gamma: float
    certified: bool
    all_completed: bool
    worst_h: Optional[float]
    cases: List[CaseSummary]


def _finite_or_none(value: float) -> Optional[float]:
    return None if value is None or not math.isfinite(value) else float(value)


def create_violation_entry(step: int, barrier: int, value: float) -> ViolationEntry:
    return ViolationEntry(step=int(step), barrier=int(barrier), value=float(value))


def create_run_report_payload(
    report,
    policy_events: Sequence[Tuple[int, str]],
    certified: bool,
    gamma: float,
    include_wall_time: bool = False,
) -> RunReportPayload:
    """
    Factory function to create a RunReportPayload from a RunReport.

    wall_time is written as null unless requested, so reports stay byte-identical
    across repeated runs.
    """
    return RunReportPayload(
        max_h=[float(v) for v in report.max_h],
        min_cheb_radius=_finite_or_none(report.min_cheb_radius),
        violations=[create_violation_entry(*v) for v in report.violations],
        exit_reason=report.exit_reason,
        exit_step=int(report.exit_step),
        wall_time=float(report.wall_time) if include_wall_time else None,
        policy_events=[[int(step), tag] for step, tag in policy_events],
        certified=bool(certified),
        gamma=float(gamma),
    )


def create_transversality_payload(report) -> TransversalityPayload:
    return {
        FieldNames.POINT: [float(v) for v in report.point],
        FieldNames.PAIR: [int(report.pair[0]), int(report.pair[1])],
        FieldNames.COS_ANGLE: _finite_or_none(report.cos_angle),
        FieldNames.PASS: bool(report.passed),
        FieldNames.DEGENERATE: bool(report.degenerate),
    }


def create_certification_payload(report) -> CertificationPayload:
    """Factory function to create a CertificationPayload from a CertificationReport"""
    passed, total = report.feasibility_sweep
    return CertificationPayload(
        strict_cbf=[float(v) for v in report.strict_cbf],
        transversality=[create_transversality_payload(r) for r in report.transversality],
        feasibility_sweep={FieldNames.PASSED: int(passed), FieldNames.TOTAL: int(total)},
        gradient_sigma_min=[float(v) for v in report.gradient_sigma_min],
        certified=bool(report.certified),
        failures=list(report.failures),
    )


def create_case_summary(
    case_id: str, policy: str, seed: int, x0: Sequence[float], report
) -> CaseSummary:
    return CaseSummary(
        case_id=case_id,
        policy=policy,
        seed=int(seed),
        x0=[float(v) for v in x0],
        exit_reason=report.exit_reason,
        worst_h=float(max(report.max_h)),
        violations=len(report.violations),
    )


def create_summary_payload(
    scenario: str, gamma: float, certified: bool, cases: List[CaseSummary]
) -> SummaryPayload:
    """Factory function to create a SummaryPayload"""
    return SummaryPayload(
        scenario=scenario,
        gamma=float(gamma),
        certified=bool(certified),
        all_completed=all(
            c[FieldNames.EXIT_REASON] == ExitReason.COMPLETED and c[FieldNames.VIOLATIONS] == 0
            for c in cases
        ),
        worst_h=max((c[FieldNames.WORST_H] for c in cases), default=None),
        cases=cases,
    )
