"""Density-parameterised structure: interpolated element models and global assembly."""

from dataclasses import dataclass

import numpy as np

from .fem import (
    Assembler,
    ElementKernels,
    GlobalSystem,
    Material,
    element_energy_batch,
    element_linear_batch,
    element_tangent_batch,
)
from .stabilize import InterpolationParams, heaviside_weight


@dataclass
class StructureState:
    """Element and global quantities at one displacement state.

    ``Ke``/``fe`` are the unscaled blended element matrices, so that
    ``K(x) = sum_e x_e Ke[e]`` is linear in the design variables.
    """

    u: np.ndarray
    x: np.ndarray
    gamma: np.ndarray
    Ke: np.ndarray
    fe: np.ndarray
    system: GlobalSystem

    @property
    def K(self):
        return self.system.K

    @property
    def f(self):
        return self.system.f


class ParameterizedStructure:
    """Mesh, material and element kernels of a design domain.

    Parameters
    ----------
    mesh : Mesh
    material : Material
    interp : InterpolationParams
    force_linear : bool
        Model every element with linear FEM (weight forced to zero).
    gamma_cutoff : float
        Weights below this value are treated as exactly zero; those elements
        skip the nonlinear kernel, so heavily distorted void elements cannot
        abort the analysis.
    """

    def __init__(self, mesh, material, interp=None, force_linear=False, gamma_cutoff=1e-9):
        self.mesh = mesh
        self.material = material if isinstance(material, Material) else Material(*material)
        self.interp = interp or InterpolationParams()
        self.force_linear = force_linear
        self.gamma_cutoff = gamma_cutoff
        self.kernels = ElementKernels.from_coords(mesh.element_coords, mesh.space.thickness)
        self.K_L = element_linear_batch(self.kernels, self.material)
        self.assembler = Assembler(mesh.edofs, mesh.free_dofs, mesh.ndof)

    @property
    def n_elements(self):
        return self.mesh.n_elements

    @property
    def n_free(self):
        return self.assembler.n

    def gamma(self, x):
        if self.force_linear:
            return np.zeros(self.n_elements)
        g = heaviside_weight(np.asarray(x, dtype=float), self.interp)
        g[g < self.gamma_cutoff] = 0.0
        return g

    def element_matrices(self, u_free, x):
        """Blended element tangents and internal forces (unscaled by density)."""
        ue = self.assembler.gather(u_free)
        g = self.gamma(x)
        Ke = self.K_L.copy()
        fe = np.einsum("eij,ej->ei", self.K_L, ue)
        nl = np.nonzero(g > 0.0)[0]
        if nl.size:
            sub = _subset(self.kernels, nl)
            Kn, fn = element_tangent_batch(sub, ue[nl], self.material)
            gn = g[nl]
            Ke[nl] = gn[:, None, None] * Kn + (1.0 - gn[:, None, None]) * Ke[nl]
            fe[nl] = gn[:, None] * fn + (1.0 - gn[:, None]) * fe[nl]
        return g, Ke, fe

    def state(self, u_free, x):
        x = np.asarray(x, dtype=float)
        g, Ke, fe = self.element_matrices(u_free, x)
        K = self.assembler.matrix(x, Ke)
        f = self.assembler.vector(x, fe)
        return StructureState(np.array(u_free, dtype=float), x, g, Ke, fe, GlobalSystem(K, f, self.assembler.free))

    def energy(self, u_free, x):
        """Total interpolated strain energy ``sum x_e (g psi_NL + (1-g) psi_L)``."""
        x = np.asarray(x, dtype=float)
        ue = self.assembler.gather(u_free)
        g = self.gamma(x)
        lin = 0.5 * np.einsum("ei,eij,ej->e", ue, self.K_L, ue)
        nonlin = np.zeros_like(lin)
        nl = np.nonzero(g > 0.0)[0]
        if nl.size:
            nonlin[nl] = element_energy_batch(_subset(self.kernels, nl), ue[nl], self.material)
        return float(np.sum(x * (g * nonlin + (1.0 - g) * lin)))

    def quadratic_coefficients(self, Ke, v_free):
        """Per-element ``v_e^T Ke v_e`` so that ``v^T K(x) v = coeffs @ x``."""
        ve = self.assembler.gather(v_free)
        return np.einsum("ei,eij,ej->e", ve, Ke, ve)


def _subset(kern, idx):
    return ElementKernels(kern.coords[idx], kern.thickness, kern.dNdX[idx], kern.wdet[idx], kern.B0[idx])
