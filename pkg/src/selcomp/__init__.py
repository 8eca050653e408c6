"""Synthesis of selectively compliant mechanisms with geometrically nonlinear topology optimisation."""

from .equilibrium import EquilibriumState, NewtonSettings, solve_equilibrium, solve_stable_state
from .errors import *  # noqa: F401,F403
from .fem import Material
from .model import (
    DesignSpace,
    DesiredDeformationFunction,
    Fixity,
    Mesh,
    StationaryPoint,
    build_mesh,
    discretize_kinematics,
    dof_partition,
    Problem,
)
from .modal import condense, eigen, orthonormal_base, selectivity
from .optimizer import OptimizationConfig, run_global, subproblem2
from .stabilize import InterpolationParams, density_filter, heaviside_weight
from .structure import ParameterizedStructure

__version__ = "0.1.0"
