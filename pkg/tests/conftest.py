import sys

import numpy as np
import pytest

from trtblock.driver import Problem
from trtblock.grid import FrequencyGroups, SpatialMesh, build_quadrature
from trtblock.physics import ConstantOpacity, MaterialModel
from trtblock.transport import SIDES, BoundaryCondition


def make_problem(n=4, groups=4, polar=1, azimuthal=2, length=6.0, left="blackbody",
                 others="vacuum", T0=1e-3, opacity=None, drift_mean="flux"):
    """Small Fleck-Cummings-like problem for unit tests."""
    mesh = SpatialMesh(n, n, length, length)
    quad = build_quadrature(polar, azimuthal)
    grps = FrequencyGroups.logarithmic(groups)
    material = MaterialModel.fleck_cummings()
    if opacity is not None:
        material = MaterialModel(cv=material.cv, opacity=opacity)
    bcs = {s: BoundaryCondition(others) for s in SIDES}
    if left == "blackbody":
        bcs["left"] = BoundaryCondition("blackbody", 1.0)
    else:
        bcs["left"] = BoundaryCondition(left)
    return Problem(mesh, quad, grps, material, bcs, T0, drift_mean=drift_mean)


def equilibrium_problem(T=0.3, n=3, groups=3):
    """Uniform medium in equilibrium, closed by reflection on every side."""
    return make_problem(n=n, groups=groups, left="reflective", others="reflective", T0=T,
                        opacity=ConstantOpacity(5.0))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
