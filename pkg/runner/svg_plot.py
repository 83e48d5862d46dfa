"""
svg_plot.py

Hand-built SVG for planar scenarios: barrier zero-level curves, the
trajectory polyline and start/end markers. Output bytes depend only on the
inputs.
"""

from typing import List, Sequence, Tuple

import numpy as np

from shared.constants import PLOT_CURVE_POINTS, ErrorMessages
from shared.exceptions import DimensionMismatch
from invariance.barrier import QUADRATIC, Barrier
from invariance.feasible_map import SafetySpec

CANVAS = 600.0
PADDING = 0.1
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"]


def barrier_curve(h: Barrier, lo: np.ndarray, hi: np.ndarray, points: int = PLOT_CURVE_POINTS) -> np.ndarray:
    """Polyline approximation of {h = 0}; affine lines are clipped to [lo, hi]."""
    if h.kind == QUADRATIC:
        eigvals, eigvecs = np.linalg.eigh(h.shape)
        inv_sqrt = eigvecs @ np.diag(eigvals**-0.5) @ eigvecs.T
        theta = 2.0 * np.pi * np.arange(points + 1) / points
        circle = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        return h.center + np.sqrt(h.level) * circle @ inv_sqrt.T
    a, beta = h.normal, h.offset
    direction = np.array([-a[1], a[0]]) / np.linalg.norm(a)
    anchor = beta * a / (a @ a)
    span = float(np.linalg.norm(hi - lo))
    s = np.linspace(-span, span, points)
    line = anchor + s[:, None] * direction
    inside = np.all((line >= lo) & (line <= hi), axis=1)
    return line[inside]


def _view_box(curves: List[np.ndarray], states: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    finite = [c for c in curves if len(c)] + [states]
    stacked = np.vstack(finite)
    lo, hi = stacked.min(axis=0), stacked.max(axis=0)
    pad = PADDING * max(float(np.max(hi - lo)), 1e-9)
    return lo - pad, hi + pad


def _points(path: np.ndarray, lo: np.ndarray, scale: float, height: float) -> str:
    # SVG y grows downward
    return " ".join(
        f"{(x - lo[0]) * scale:.3f},{height - (y - lo[1]) * scale:.3f}" for x, y in path
    )


def render_svg(spec: SafetySpec, states: Sequence[Sequence[float]]) -> str:
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if spec.n != 2 or states.shape[1] != 2:
        raise DimensionMismatch(ErrorMessages.PLANAR_ONLY)

    lo, hi = spec.box()
    data_lo, data_hi = states.min(axis=0), states.max(axis=0)
    span = max(float(np.max(data_hi - data_lo)), 1.0)
    clip_lo = np.where(np.isfinite(lo), lo, data_lo - span)
    clip_hi = np.where(np.isfinite(hi), hi, data_hi + span)
    if spec.bounding_box is not None:
        clip_lo = np.minimum(clip_lo, np.asarray(spec.bounding_box[0], dtype=float))
        clip_hi = np.maximum(clip_hi, np.asarray(spec.bounding_box[1], dtype=float))
    curves = [barrier_curve(h, clip_lo, clip_hi) for h in spec.barriers]

    view_lo, view_hi = _view_box(curves, states)
    scale = CANVAS / float(np.max(view_hi - view_lo))
    width = (view_hi[0] - view_lo[0]) * scale
    height = (view_hi[1] - view_lo[1]) * scale

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.3f}" height="{height:.3f}" '
        f'viewBox="0 0 {width:.3f} {height:.3f}">',
        f'<rect x="0" y="0" width="{width:.3f}" height="{height:.3f}" fill="#ffffff"/>',
    ]
    for i, curve in enumerate(curves):
        if not len(curve):
            continue
        color = COLORS[i % len(COLORS)]
        lines.append(
            f'<polyline id="barrier-{i + 1}" fill="none" stroke="{color}" stroke-width="1.5" '
            f'points="{_points(curve, view_lo, scale, height)}"/>'
        )
    lines.append(
        f'<polyline id="trajectory" fill="none" stroke="#000000" stroke-width="1" '
        f'points="{_points(states, view_lo, scale, height)}"/>'
    )
    for marker, point, fill in (("start", states[0], "#2ca02c"), ("end", states[-1], "#d62728")):
        x, y = (point[0] - view_lo[0]) * scale, height - (point[1] - view_lo[1]) * scale
        lines.append(f'<circle id="{marker}" cx="{x:.3f}" cy="{y:.3f}" r="4" fill="{fill}"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
