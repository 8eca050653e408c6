import numpy as np
import pytest

from selcomp.fem import Material
from selcomp.model import (
    DesignSpace,
    DesiredDeformationFunction,
    Fixity,
    Problem,
    build_mesh,
    discretize_kinematics,
    dof_partition,
)
from selcomp.structure import ParameterizedStructure

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


@pytest.fixture
def nylon():
    return Material(3000.0, 0.4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def small_inverter(nelx=12, nely=6, alphas=(0.0, 0.1, 0.2), quadratic=False):
    """Coarse half-inverter used by the fast pipeline tests."""
    space = DesignSpace(float(nelx), float(nely), nelx, nely)
    mesh = build_mesh(
        space,
        [Fixity((0, nely - 2), (0, nely)), Fixity((0, 0), (nelx, 0), kind="symmetry")],
    )
    part = dof_partition(mesh, [mesh.dof((1, 0), "x"), mesh.dof((nelx - 1, 0), "x")])
    second = [-1.0, -1.0] if quadratic else [-1.0]
    func = DesiredDeformationFunction.from_polynomials([[1.0], second], (0.0, 1.0))
    return Problem(mesh, Material(3000.0, 0.4), part, discretize_kinematics(func, alphas), "small")


@pytest.fixture
def small_problem():
    return small_inverter()


@pytest.fixture
def small_structure(small_problem):
    return ParameterizedStructure(small_problem.mesh, small_problem.material)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
