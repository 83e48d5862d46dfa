#!/usr/bin/env python3
"""
run_utils.py

Utility helpers for the scenario runner to keep `run_scenario.py` lean.
Includes:
  - Trajectory CSV writing / reading
  - Atomic JSON and text output
  - Post-hoc verification of written trajectories
  - Printing helpers
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List

import numpy as np

from shared.constants import STRICT_MARGIN_FLOOR, ErrorMessages, ExitReason, FieldNames
from shared.logger import get_logger

logger = get_logger(__name__)

_COLUMN = re.compile(r"^([a-z]+)(\d*)$")


# ------------------------- Atomic output ------------------------- #
def write_text_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(payload: Any) -> str:
    return json.dumps(payload, indent=2, sort_keys=False, allow_nan=False) + "\n"


def write_json_atomic(path: Path, payload: Any) -> None:
    write_text_atomic(path, dump_json(payload))


def ensure_out_dir(out_dir: Path) -> bool:
    """Create out_dir if missing; False when it cannot be created or written."""
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        logger.error(ErrorMessages.OUT_DIR_UNWRITABLE.format(path=out_dir))
        logger.debug(str(e))
        return False
    if not os.access(out_dir, os.W_OK):
        logger.error(ErrorMessages.OUT_DIR_UNWRITABLE.format(path=out_dir))
        return False
    return True


# ------------------------- Trajectory CSV ------------------------- #
def _fmt(value: float) -> str:
    value = float(value)
    return "" if math.isnan(value) else repr(value)


def trajectory_header(n: int, m: int, n_barriers: int) -> List[str]:
    return (
        [FieldNames.TIME]
        + [f"{FieldNames.STATE_PREFIX}{i + 1}" for i in range(n)]
        + [f"{FieldNames.CONTROL_PREFIX}{i + 1}" for i in range(m)]
        + [f"{FieldNames.BARRIER_PREFIX}{i + 1}" for i in range(n_barriers)]
        + [FieldNames.RADIUS]
    )


def trajectory_csv_text(traj) -> str:
    """One row per state; the final row carries no control."""
    n = traj.states.shape[1]
    m = traj.controls.shape[1]
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(trajectory_header(n, m, traj.h_values.shape[1]))
    for k in range(traj.states.shape[0]):
        controls = [_fmt(u) for u in traj.controls[k]] if k < traj.n_steps else [""] * m
        writer.writerow(
            [_fmt(traj.times[k])]
            + [_fmt(v) for v in traj.states[k]]
            + controls
            + [_fmt(v) for v in traj.h_values[k]]
            + [_fmt(traj.cheb_radii[k])]
        )
    return buffer.getvalue()


@dataclass
class TrajectoryColumns:
    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    h_values: np.ndarray
    cheb_radii: np.ndarray


def _parse(cell: str) -> float:
    return float("nan") if cell == "" else float(cell)


def read_trajectory_csv(path: Path) -> TrajectoryColumns:
    """Raises FileNotFoundError when missing and ValueError when empty or malformed."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(ErrorMessages.CSV_NOT_FOUND.format(path=path))
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if len(rows) < 2:
        raise ValueError(ErrorMessages.CSV_EMPTY.format(path=path))

    groups: Dict[str, List[int]] = {}
    for index, name in enumerate(rows[0]):
        match = _COLUMN.match(name)
        if not match:
            raise ValueError(f"unexpected CSV column '{name}' in {path}")
        groups.setdefault(match.group(1), []).append(index)
    for key in (FieldNames.TIME, FieldNames.STATE_PREFIX, FieldNames.CONTROL_PREFIX, FieldNames.BARRIER_PREFIX):
        if key not in groups:
            raise ValueError(f"CSV {path} is missing '{key}' columns")

    data = np.array([[_parse(cell) for cell in row] for row in rows[1:]], dtype=float)
    controls = data[:-1][:, groups[FieldNames.CONTROL_PREFIX]]
    return TrajectoryColumns(
        times=data[:, groups[FieldNames.TIME][0]],
        states=data[:, groups[FieldNames.STATE_PREFIX]],
        controls=controls,
        h_values=data[:, groups[FieldNames.BARRIER_PREFIX]],
        cheb_radii=data[:, groups[FieldNames.RADIUS][0]] if FieldNames.RADIUS in groups else np.full(len(data), np.nan),
    )


def recompute_worst_h(states: np.ndarray, spec) -> float:
    """Worst barrier value over logged states, recomputed from the spec."""
    return float(max(np.max(spec.h_values(s)) for s in states))


# ------------------------- Printing ------------------------- #
def _supports_color() -> bool:
    import sys as _sys

    return hasattr(_sys.stdout, "isatty") and _sys.stdout.isatty()


def _marks():
    color = _supports_color()
    green = "\033[92m" if color else ""
    red = "\033[91m" if color else ""
    reset = "\033[0m" if color else ""
    return f"{green}✓{reset}", f"{red}✗{reset}"


def print_certification(payload: Dict[str, Any]) -> None:
    ok, bad = _marks()
    logger.info("\n" + "=" * 70)
    logger.info("CERTIFICATION REPORT")
    logger.info("=" * 70)
    for i, margin in enumerate(payload[FieldNames.STRICT_CBF]):
        indicator = ok if margin < -STRICT_MARGIN_FLOOR else bad
        logger.info(f"{indicator} barrier {i + 1}: worst strict-CBF margin {margin:.6g}")
    reports = payload[FieldNames.TRANSVERSALITY]
    if not reports:
        logger.info("   no pairwise boundary intersections found")
    for r in reports:
        indicator = ok if r[FieldNames.PASS] else bad
        i, j = r[FieldNames.PAIR]
        cos_angle = r[FieldNames.COS_ANGLE]
        shown = "degenerate" if cos_angle is None else f"cos angle {cos_angle:.6g}"
        point = [round(v, 6) for v in r[FieldNames.POINT]]
        logger.info(f"{indicator} transversality ({i + 1}, {j + 1}) at {point}: {shown}")
    sweep = payload[FieldNames.FEASIBILITY_SWEEP]
    passed, total = sweep[FieldNames.PASSED], sweep[FieldNames.TOTAL]
    logger.info(f"{ok if passed == total and total else bad} feasibility sweep: {passed}/{total}")
    sigmas = payload[FieldNames.GRADIENT_SIGMA_MIN]
    if sigmas:
        logger.info(f"   min singular value of active gradients: {min(sigmas):.6g}")
    logger.info("\n" + "=" * 70)
    logger.info(f"CERTIFIED: {payload[FieldNames.CERTIFIED]}")
    logger.info("=" * 70 + "\n")


def print_run_summary(summary: Dict[str, Any]) -> None:
    ok, bad = _marks()
    logger.info("\n" + "=" * 70)
    logger.info(f"RUN SUMMARY: {summary['scenario']} (gamma={summary[FieldNames.GAMMA]:.6g})")
    logger.info("=" * 70)
    for case in summary[FieldNames.CASES]:
        good = case[FieldNames.EXIT_REASON] == ExitReason.COMPLETED and case[FieldNames.VIOLATIONS] == 0
        logger.info(
            f"{ok if good else bad} {case[FieldNames.CASE_ID]}: {case[FieldNames.EXIT_REASON]}, "
            f"worst h {case[FieldNames.WORST_H]:.6g}, {case[FieldNames.VIOLATIONS]} violations"
        )
    logger.info("\n" + "=" * 70)
    if summary[FieldNames.WORST_H] is not None:
        logger.info(f"WORST h OVER ALL RUNS: {summary[FieldNames.WORST_H]:.6g}")
    if not summary[FieldNames.CERTIFIED]:
        logger.info("UNCERTIFIED: spec failed certification, run was forced")
    logger.info("=" * 70 + "\n")
