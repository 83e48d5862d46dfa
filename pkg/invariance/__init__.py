"""
invariance package

Polytope geometry, barrier catalog, feasible-control maps, the per-state
safety program, selection policies, closed-loop simulation and certification.
"""

from .analysis import certify
from .barrier import AlphaFunction, Barrier, SystemDynamics
from .feasible_map import SafetySpec, build_K, build_K_gamma, estimate_gamma
from .geometry import Polytope, box_input_polytope, chebyshev
from .policy import select_control
from .simulator import SimConfig, simulate

__all__ = [
    "AlphaFunction",
    "Barrier",
    "Polytope",
    "SafetySpec",
    "SimConfig",
    "SystemDynamics",
    "box_input_polytope",
    "build_K",
    "build_K_gamma",
    "certify",
    "chebyshev",
    "estimate_gamma",
    "select_control",
    "simulate",
]
