#!/usr/bin/env python3
"""
run_scenario.py

Command-line entry point. Subcommands:
    check   <scenario.json>                      certify the spec
    gamma   <scenario.json>                      estimate the contraction margin
    run     <scenario.json> [--out DIR]          certify, then simulate every case
    plot    <trajectory.csv> <scenario.json> <out.svg>
    verify  <trajectory.csv> <scenario.json>     recompute h along a written run

Exit codes: 0 success, 1 domain failure, 2 I/O or parse error, 3 forced
run of an uncertified spec.

Usage:
    python -m runner.run_scenario run scenarios/two_disk.json --out out/two_disk
"""

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from shared.logger import configure_all, get_logger

logger = get_logger(__name__)

try:
    from shared.constants import (
        DEFAULT_OUT_DIR,
        REPORT_FILENAME_TEMPLATE,
        SUMMARY_FILENAME,
        TRAJECTORY_FILENAME_TEMPLATE,
        UNCERTIFIED_MARKER_FILENAME,
        ErrorMessages,
        ExitCodes,
        FieldNames,
        PolicyNames,
    )
    from shared.exceptions import (
        InvalidParameter,
        InvarianceError,
        PreconditionViolated,
        SampleOutsideOmega,
        ScenarioError,
        SolverFailure,
    )
    from shared.models import (
        CaseSummary,
        create_case_summary,
        create_certification_payload,
        create_run_report_payload,
        create_summary_payload,
    )
    from shared.scenario import (
        Scenario,
        describe_diagnostics,
        load_scenario,
        resolve_gamma,
        sim_config,
        start_states,
    )
    from invariance.analysis import certify
    from invariance.feasible_map import SafeSetSampler, sample_min_radius
    from invariance.policy import Policy
    from invariance.simulator import SimConfig, simulate
    from runner.run_utils import (
        ensure_out_dir,
        print_certification,
        print_run_summary,
        read_trajectory_csv,
        recompute_worst_h,
        trajectory_csv_text,
        write_json_atomic,
        write_text_atomic,
    )
    from runner.svg_plot import render_svg
except ImportError as e:
    logger.error(f"Error importing modules: {e}")
    logger.error("Make sure the requirements are installed and the repo root is on the path.")
    sys.exit(1)


def _load(path: str, policy_override: Optional[str] = None) -> Optional[Scenario]:
    try:
        return load_scenario(Path(path), policy_override)
    except ScenarioError as e:
        logger.error(str(e))
        for line in describe_diagnostics(e):
            logger.error(f"   {line}")
        return None


def _certify(scenario: Scenario, seed: int):
    cert = scenario.source.certification
    return certify(
        scenario.spec,
        scenario.sys,
        boundary_samples=cert.boundary_samples,
        sweep_samples=cert.sweep_samples,
        seed=seed,
        intersection_starts=cert.intersection_starts,
    )


def _seeds(scenario: Scenario, seed_override: Optional[int]) -> List[int]:
    return [seed_override] if seed_override is not None else list(scenario.source.seeds)


# ------------------------- check ------------------------- #
def cmd_check(args) -> int:
    scenario = _load(args.scenario)
    if scenario is None:
        return ExitCodes.IO_ERROR
    report = _certify(scenario, _seeds(scenario, args.seed_override)[0])
    print_certification(create_certification_payload(report))
    return ExitCodes.SUCCESS if report.certified else ExitCodes.DOMAIN_FAILURE


# ------------------------- gamma ------------------------- #
def cmd_gamma(args) -> int:
    scenario = _load(args.scenario)
    if scenario is None:
        return ExitCodes.IO_ERROR
    sim = scenario.source.sim
    seed = _seeds(scenario, args.seed_override)[0]
    try:
        sweep = sample_min_radius(
            scenario.spec, scenario.sys, SafeSetSampler(scenario.spec, strict=True), sim.gamma_samples, seed
        )
    except SampleOutsideOmega as e:
        logger.error(str(e))
        logger.error(f"   offending state: {np.round(e.x, 12).tolist()}")
        return ExitCodes.DOMAIN_FAILURE
    except InvalidParameter as e:
        logger.error(str(e))
        return ExitCodes.DOMAIN_FAILURE
    logger.info(f"gamma: {sim.rho * sweep.min_radius!r}")
    logger.info(f"min Chebyshev radius: {sweep.min_radius!r}")
    logger.info(f"samples: {sweep.count}")
    return ExitCodes.SUCCESS


# ------------------------- run ------------------------- #
@dataclass
class RunCase:
    case_id: str
    policy_name: str
    policy: Policy
    seed: int
    x0: np.ndarray


def _run_case(case: RunCase, scenario: Scenario, cfg: SimConfig, out_dir: Path, certified: bool, timing: bool):
    """Simulate one case and write its outputs; returns its summary or None on failure."""
    try:
        trajectory, report = simulate(scenario.spec, scenario.sys, case.policy, case.x0, cfg)
    except PreconditionViolated as e:
        logger.error(f"{case.case_id}: {e} ({e.condition})")
        return None
    except SolverFailure as e:
        logger.error(f"{case.case_id}: solver failure at step {e.step}: {e}")
        return None
    except InvarianceError as e:
        logger.error(f"{case.case_id}: {type(e).__name__}: {e}")
        return None
    write_text_atomic(
        out_dir / TRAJECTORY_FILENAME_TEMPLATE.format(case_id=case.case_id), trajectory_csv_text(trajectory)
    )
    write_json_atomic(
        out_dir / REPORT_FILENAME_TEMPLATE.format(case_id=case.case_id),
        create_run_report_payload(report, trajectory.policy_events, certified, cfg.gamma, timing),
    )
    return create_case_summary(case.case_id, case.policy_name, case.seed, case.x0, report)


def cmd_run(args) -> int:
    scenario = _load(args.scenario, args.policy)
    if scenario is None:
        return ExitCodes.IO_ERROR
    out_dir = Path(args.out) if args.out else DEFAULT_OUT_DIR / scenario.name
    if not ensure_out_dir(out_dir):
        return ExitCodes.IO_ERROR
    seeds = _seeds(scenario, args.seed_override)

    report = _certify(scenario, seeds[0])
    payload = create_certification_payload(report)
    print_certification(payload)
    if not report.certified:
        if not args.force:
            logger.error(ErrorMessages.CERTIFICATION_FAILED.format(reason="pass --force to run anyway"))
            return ExitCodes.DOMAIN_FAILURE
        logger.warning("Running an uncertified spec; outputs are marked UNCERTIFIED")
        write_json_atomic(out_dir / UNCERTIFIED_MARKER_FILENAME, payload)

    try:
        gamma = resolve_gamma(scenario, seeds[0])
        cases = [
            RunCase(f"{name}_seed{seed}_{index:02d}", name, policy, seed, x0)
            for name, policy in scenario.policies
            for seed in seeds
            for index, x0 in enumerate(start_states(scenario, seed))
        ]
    except InvarianceError as e:
        logger.error(f"Error: {e}")
        return ExitCodes.DOMAIN_FAILURE
    try:
        cfg = sim_config(scenario, gamma, args.dt)
    except InvalidParameter as e:
        logger.error(f"Error: invalid simulation settings: {e}")
        return ExitCodes.IO_ERROR
    logger.info(f"Running {len(cases)} cases with gamma={gamma:.6g}, dt={cfg.dt:g}, T={cfg.T:g}")

    def work(case: RunCase):
        return _run_case(case, scenario, cfg, out_dir, report.certified, args.timing)

    workers = max(1, int(args.workers))
    if workers == 1:
        results = [work(case) for case in cases]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, cases))

    summaries: List[CaseSummary] = [r for r in results if r is not None]
    summary = create_summary_payload(scenario.name, gamma, report.certified, summaries)
    write_json_atomic(out_dir / SUMMARY_FILENAME, summary)
    print_run_summary(summary)

    if not report.certified:
        return ExitCodes.FORCED_UNCERTIFIED
    if len(summaries) == len(cases) and summary[FieldNames.ALL_COMPLETED]:
        return ExitCodes.SUCCESS
    return ExitCodes.DOMAIN_FAILURE


# ------------------------- plot ------------------------- #
def cmd_plot(args) -> int:
    scenario = _load(args.scenario)
    if scenario is None:
        return ExitCodes.IO_ERROR
    try:
        columns = read_trajectory_csv(Path(args.trajectory))
    except (FileNotFoundError, ValueError) as e:
        logger.error(str(e))
        return ExitCodes.IO_ERROR
    if scenario.spec.n != 2:
        logger.error(ErrorMessages.PLANAR_ONLY)
        return ExitCodes.DOMAIN_FAILURE
    if columns.states.shape[1] != 2:
        logger.error(f"Error: trajectory has {columns.states.shape[1]} state columns, scenario has 2")
        return ExitCodes.IO_ERROR
    out_svg = Path(args.out_svg)
    try:
        out_svg.parent.mkdir(parents=True, exist_ok=True)
        write_text_atomic(out_svg, render_svg(scenario.spec, columns.states))
    except OSError as e:
        logger.error(ErrorMessages.OUT_DIR_UNWRITABLE.format(path=out_svg.parent))
        logger.debug(str(e))
        return ExitCodes.IO_ERROR
    logger.info(f"SVG written: {out_svg}")
    return ExitCodes.SUCCESS


# ------------------------- verify ------------------------- #
def cmd_verify(args) -> int:
    scenario = _load(args.scenario)
    if scenario is None:
        return ExitCodes.IO_ERROR
    try:
        columns = read_trajectory_csv(Path(args.trajectory))
    except (FileNotFoundError, ValueError) as e:
        logger.error(str(e))
        return ExitCodes.IO_ERROR
    if columns.states.shape[1] != scenario.spec.n:
        logger.error(
            f"Error: trajectory has {columns.states.shape[1]} state columns, scenario has {scenario.spec.n}"
        )
        return ExitCodes.IO_ERROR
    worst = recompute_worst_h(columns.states, scenario.spec)
    tol = scenario.source.sim.violation_tol
    logger.info(f"worst h (recomputed): {worst!r}")
    logger.info(f"worst h (recorded):   {float(np.nanmax(columns.h_values))!r}")
    if worst <= tol:
        logger.info(f"Invariance verified at tolerance {tol:g}")
        return ExitCodes.SUCCESS
    logger.error(f"Invariance violated: worst h {worst:.6g} exceeds {tol:g}")
    return ExitCodes.DOMAIN_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Certify and simulate multi-set CBF safety specs.")
    parser.add_argument("--verbose", action="store_true", help="Enable debug logging")
    parser.add_argument("--log-file", type=str, default=None, help="Also write logs to this file")
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", help="Certify a scenario")
    check.add_argument("scenario")
    check.add_argument("--seed-override", type=int, default=None)
    check.set_defaults(handler=cmd_check)

    gamma = sub.add_parser("gamma", help="Estimate the contraction margin gamma")
    gamma.add_argument("scenario")
    gamma.add_argument("--seed-override", type=int, default=None)
    gamma.set_defaults(handler=cmd_gamma)

    run = sub.add_parser("run", help="Certify and simulate every case of a scenario")
    run.add_argument("scenario")
    run.add_argument("--out", type=str, default=None, help="Output directory (default: out/<scenario name>)")
    run.add_argument("--force", action="store_true", help="Run even if certification fails")
    run.add_argument("--seed-override", type=int, default=None, help="Use this seed instead of the file's seeds")
    run.add_argument("--dt", type=float, default=None, help="Override the scenario time step")
    run.add_argument("--policy", type=str, default=None, choices=PolicyNames.ALL, help="Run only this policy")
    run.add_argument("--workers", type=int, default=1, help="Number of cases simulated concurrently")
    run.add_argument("--timing", action="store_true", help="Record wall_time in run reports")
    run.set_defaults(handler=cmd_run)

    plot = sub.add_parser("plot", help="Render a planar trajectory as SVG")
    plot.add_argument("trajectory")
    plot.add_argument("scenario")
    plot.add_argument("out_svg")
    plot.set_defaults(handler=cmd_plot)

    verify = sub.add_parser("verify", help="Recompute h along a written trajectory")
    verify.add_argument("trajectory")
    verify.add_argument("scenario")
    verify.set_defaults(handler=cmd_verify)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    configure_all(logging.DEBUG if args.verbose else logging.INFO, Path(args.log_file) if args.log_file else None)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
