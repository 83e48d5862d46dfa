"""Shared fixtures: the catalog specs used across the test modules."""

from pathlib import Path

import numpy as np
import pytest

from shared.constants import SCENARIOS_DIR
from invariance.barrier import AlphaFunction, Barrier, SystemDynamics
from invariance.feasible_map import SafetySpec
from invariance.geometry import Polytope, box_input_polytope


@pytest.fixture
def unit_box() -> Polytope:
    return box_input_polytope(2, 1.0)


@pytest.fixture
def triangle() -> Polytope:
    # u1 >= 0, u2 >= 0, u1 + u2 <= 1
    return Polytope(np.array([[-1.0, 0.0], [0.0, -1.0], [1.0, 1.0]]), np.array([0.0, 0.0, 1.0]))


@pytest.fixture
def integrator_2d() -> SystemDynamics:
    return SystemDynamics.single_integrator(2)


@pytest.fixture
def integrator_1d() -> SystemDynamics:
    return SystemDynamics.single_integrator(1)


@pytest.fixture
def interval_spec() -> SafetySpec:
    """h(x) = x^2 - 1 with |u| <= 1."""
    return SafetySpec(
        barriers=[Barrier.disk([0.0], 1.0)],
        alphas=[AlphaFunction()],
        input_set=box_input_polytope(1, 1.0),
    )


@pytest.fixture
def two_disk_spec() -> SafetySpec:
    """Unit disks centered at (-0.5, 0) and (0.5, 0) with a unit input box."""
    return SafetySpec(
        barriers=[Barrier.disk([-0.5, 0.0], 1.0), Barrier.disk([0.5, 0.0], 1.0)],
        alphas=[AlphaFunction(), AlphaFunction()],
        input_set=box_input_polytope(2, 1.0),
    )


@pytest.fixture
def tangent_disk_spec() -> SafetySpec:
    return SafetySpec(
        barriers=[Barrier.disk([0.0, 0.0], 1.0), Barrier.disk([2.0, 0.0], 1.0)],
        alphas=[AlphaFunction(), AlphaFunction()],
        input_set=box_input_polytope(2, 1.0),
    )


@pytest.fixture
def scenarios_dir() -> Path:
    return SCENARIOS_DIR
