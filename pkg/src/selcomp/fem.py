"""Bilinear quadrilateral kernels for plane stress.

Linear small-strain elements and total Lagrangian elements with a compressible
neo-Hookean law. All element routines are batched over a leading element axis;
the single-element helpers simply wrap the batched versions.

Voigt order is (11, 22, 12) with engineering shear strain everywhere.
Units are mm, N and MPa.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ElementGeometryError, IncompressibleLimitError, InvertedStateError

_GP = 1.0 / np.sqrt(3.0)
GAUSS_POINTS = np.array([[-_GP, -_GP], [_GP, -_GP], [_GP, _GP], [-_GP, _GP]])
GAUSS_WEIGHTS = np.ones(4)
_XI = np.array([-1.0, 1.0, 1.0, -1.0])
_ETA = np.array([-1.0, -1.0, 1.0, 1.0])
_VOIGT = ((0, 0), (1, 1), (0, 1))


def lame(E, nu):
    """Lamé parameters ``(lambda, mu)`` from Young's modulus and Poisson's ratio."""
    if E <= 0:
        raise ValueError(f"modulus must be positive, got {E}")
    if nu >= 0.5:
        raise IncompressibleLimitError(f"nu={nu} reaches the incompressible limit")
    if nu < 0:
        raise ValueError(f"nu must be non-negative, got {nu}")
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = E / (2.0 * (1.0 + nu))
    return lam, mu


@dataclass(frozen=True)
class Material:
    E: float
    nu: float
    lam: float = field(init=False)
    mu: float = field(init=False)

    def __post_init__(self):
        lam, mu = lame(self.E, self.nu)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)

    def plane_stress_matrix(self):
        """Linear-elastic plane-stress material matrix (3x3, Voigt)."""
        c = self.E / (1.0 - self.nu**2)
        return c * np.array(
            [[1.0, self.nu, 0.0], [self.nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - self.nu)]]
        )


def plane_stress_neo_hookean(C_hat, mat):
    """Compressible neo-Hookean response under plane stress.

    The out-of-plane stretch follows in closed form from ``S33 = 0``::

        C33 = (lam/2 + mu) / (mu + lam/2 * det(C_hat))

    so no local iteration is needed.

    Parameters
    ----------
    C_hat : ndarray, shape (..., 2, 2)
        In-plane right Cauchy-Green tensor.
    mat : Material

    Returns
    -------
    C33 : ndarray, shape (...)
    S : ndarray, shape (..., 2, 2)
        Second Piola-Kirchhoff stress.
    D : ndarray, shape (..., 3, 3)
        Consistent tangent ``dS/dE`` in Voigt notation.
    psi : ndarray, shape (...)
        Strain energy density.
    """
    C_hat = np.asarray(C_hat, dtype=float)
    lam, mu = mat.lam, mat.mu
    det = C_hat[..., 0, 0] * C_hat[..., 1, 1] - C_hat[..., 0, 1] * C_hat[..., 1, 0]
    if np.any(det <= 0.0):
        raise InvertedStateError("det(C_hat) <= 0")
    a = 0.5 * lam + mu
    C33 = a / (mu + 0.5 * lam * det)
    if np.any(C33 <= 0.0):
        raise InvertedStateError("C33 <= 0")

    Ci = np.empty_like(C_hat)
    Ci[..., 0, 0] = C_hat[..., 1, 1] / det
    Ci[..., 1, 1] = C_hat[..., 0, 0] / det
    Ci[..., 0, 1] = -C_hat[..., 0, 1] / det
    Ci[..., 1, 0] = -C_hat[..., 1, 0] / det

    S = mu * (np.eye(2) - C33[..., None, None] * Ci)

    c1 = mu * lam * C33**2 * det / a
    c2 = mu * C33
    D = np.empty(C_hat.shape[:-2] + (3, 3))
    for p, (i, j) in enumerate(_VOIGT):
        for q, (k, l) in enumerate(_VOIGT):
            D[..., p, q] = c1 * Ci[..., i, j] * Ci[..., k, l] + c2 * (
                Ci[..., i, k] * Ci[..., j, l] + Ci[..., i, l] * Ci[..., j, k]
            )

    J2 = det * C33
    trC = C_hat[..., 0, 0] + C_hat[..., 1, 1] + C33
    psi = lam * (J2 - 1.0) / 4.0 - a * 0.5 * np.log(J2) + 0.5 * mu * (trC - 3.0)
    return C33, S, D, psi


def _shape_derivatives_ref():
    # (gauss point, node, d/dxi d/deta)
    xi, eta = GAUSS_POINTS[:, 0:1], GAUSS_POINTS[:, 1:2]
    dxi = 0.25 * _XI * (1.0 + eta * _ETA)
    deta = 0.25 * _ETA * (1.0 + xi * _XI)
    return np.stack([dxi, deta], axis=-1)


_DN_REF = _shape_derivatives_ref()


@dataclass
class ElementKernels:
    """Reference-geometry data for a batch of Q4 elements.

    Attributes
    ----------
    coords : ndarray, shape (m, 4, 2)
        Node coordinates, counterclockwise.
    thickness : float
    dNdX : ndarray, shape (m, 4, 4, 2)
        Shape-function gradients at each Gauss point.
    wdet : ndarray, shape (m, 4)
        Integration weight times Jacobian determinant times thickness.
    B0 : ndarray, shape (m, 4, 3, 8)
        Small-strain displacement matrices.
    """

    coords: np.ndarray
    thickness: float
    dNdX: np.ndarray
    wdet: np.ndarray
    B0: np.ndarray

    @classmethod
    def from_coords(cls, coords, thickness=1.0):
        coords = np.asarray(coords, dtype=float)
        if coords.ndim == 2:
            coords = coords[None]
        J = np.einsum("eai,gaj->egij", coords, _DN_REF)
        detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        if np.any(detJ <= 0.0):
            bad = np.unique(np.nonzero(detJ <= 0.0)[0])
            raise ElementGeometryError(f"non-positive Jacobian in elements {bad.tolist()}")
        Jinv = np.linalg.inv(J)
        dNdX = np.einsum("gaj,egjk->egak", _DN_REF, Jinv)
        wdet = detJ * GAUSS_WEIGHTS * thickness
        F = np.broadcast_to(np.eye(2), dNdX.shape[:2] + (2, 2))
        return cls(coords, float(thickness), dNdX, wdet, strain_displacement(dNdX, F))

    def __len__(self):
        return self.coords.shape[0]


def strain_displacement(dNdX, F):
    """Green-Lagrange strain variation matrix ``B_L`` for deformation gradient ``F``.

    ``dNdX`` has shape (..., 4, 2) and ``F`` shape (..., 2, 2); result (..., 3, 8).
    """
    n1, n2 = dNdX[..., 0], dNdX[..., 1]
    # columns ordered (node, component) -> 2*a + k
    r0 = n1[..., :, None] * F[..., None, :, 0]
    r1 = n2[..., :, None] * F[..., None, :, 1]
    r2 = n2[..., :, None] * F[..., None, :, 0] + n1[..., :, None] * F[..., None, :, 1]
    lead = dNdX.shape[:-2]
    return np.stack([r.reshape(lead + (8,)) for r in (r0, r1, r2)], axis=-2)


def element_linear_batch(kern, mat):
    """Linear stiffness matrices ``K_L^e`` for all elements, shape (m, 8, 8)."""
    D = mat.plane_stress_matrix()
    B = kern.B0
    return np.einsum("egvi,vw,egwj,eg->eij", B, D, B, kern.wdet, optimize=True)


def deformation_gradient(kern, u_e):
    """``F = I + grad_X u`` at every Gauss point, shape (m, 4, 2, 2)."""
    U = np.asarray(u_e, dtype=float).reshape(-1, 4, 2)
    H = np.einsum("eai,egaj->egij", U, kern.dNdX)
    return H + np.eye(2)


def element_tangent_batch(kern, u_e, mat, return_state=False):
    """Total Lagrangian tangent and internal force for all elements.

    Parameters
    ----------
    kern : ElementKernels
    u_e : ndarray, shape (m, 8)
    mat : Material
    return_state : bool
        Also return the Gauss-point stress ``S`` and ``C``.

    Returns
    -------
    K : ndarray, shape (m, 8, 8)
        Material plus geometric stiffness.
    f : ndarray, shape (m, 8)
        Internal nodal forces.
    """
    F = deformation_gradient(kern, u_e)
    detF = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    if np.any(detF <= 0.0):
        bad = np.unique(np.nonzero(detF <= 0.0)[0])
        raise InvertedStateError(f"inverted elements {bad[:10].tolist()}")
    C = np.swapaxes(F, -1, -2) @ F
    _, S, D, _ = plane_stress_neo_hookean(C, mat)
    B = strain_displacement(kern.dNdX, F)
    Sv = np.stack([S[..., 0, 0], S[..., 1, 1], S[..., 0, 1]], axis=-1)
    w = kern.wdet

    f = np.einsum("egvi,egv,eg->ei", B, Sv, w)
    BtD = np.swapaxes(B, -1, -2) @ D
    Km = np.einsum("egiv,egvj,eg->eij", BtD, B, w)
    G = np.einsum("egak,egkl,egbl,eg->eab", kern.dNdX, S, kern.dNdX, w)
    Kg = np.einsum("eab,kl->eakbl", G, np.eye(2)).reshape(-1, 8, 8)
    K = Km + Kg
    if return_state:
        return K, f, S, C
    return K, f


def element_energy_batch(kern, u_e, mat):
    """Total strain energy of each element (N mm), shape (m,)."""
    F = deformation_gradient(kern, u_e)
    C = np.swapaxes(F, -1, -2) @ F
    _, _, _, psi = plane_stress_neo_hookean(C, mat)
    return np.sum(psi * kern.wdet, axis=-1)


def element_linear(coords, mat, thickness=1.0):
    """8x8 linear stiffness of a single element."""
    return element_linear_batch(ElementKernels.from_coords(coords, thickness), mat)[0]


@dataclass
class ElementTangent:
    K: np.ndarray
    f: np.ndarray
    S: np.ndarray
    C: np.ndarray


def element_tangent(coords, u_e, mat, thickness=1.0):
    """Nonlinear tangent of a single element at displacement ``u_e``."""
    kern = ElementKernels.from_coords(coords, thickness)
    K, f, S, C = element_tangent_batch(kern, np.reshape(u_e, (1, 8)), mat, return_state=True)
    return ElementTangent(K[0], f[0], S[0], C[0])


class Assembler:
    """Scatter of per-element matrices into a fixed CSR pattern over free DoFs.

    The pattern and the map from element entries to CSR slots are computed
    once; each assembly is a single ``np.bincount``, so the summation order is
    fixed and results are reproducible bit for bit.

    Parameters
    ----------
    edofs : ndarray, shape (m, 8)
        Global DoF numbers of each element.
    free : ndarray
        Sorted global numbers of the unconstrained DoFs.
    ndof : int
        Total number of structural DoFs.
    """

    def __init__(self, edofs, free, ndof):
        self.edofs = np.asarray(edofs)
        self.free = np.asarray(free)
        self.ndof = int(ndof)
        local = np.full(self.ndof, -1)
        local[self.free] = np.arange(self.free.size)
        self.local = local
        le = local[self.edofs]
        rows = np.repeat(le, 8, axis=1).ravel()
        cols = np.tile(le, (1, 8)).ravel()
        keep = (rows >= 0) & (cols >= 0)
        self._keep = keep
        n = self.free.size
        key = rows[keep].astype(np.int64) * n + cols[keep]
        uniq, slot = np.unique(key, return_inverse=True)
        self._slot = slot.ravel()
        self._nnz = uniq.size
        r, c = np.divmod(uniq, n)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, r + 1, 1)
        self._indptr = np.cumsum(indptr)
        self._indices = c.astype(np.int64)
        self._fkeep = le.ravel() >= 0
        self._fidx = le.ravel()[self._fkeep]

    @property
    def n(self):
        return self.free.size

    def matrix(self, scale, Ke):
        """``sum_e scale_e * K_e`` restricted to free DoFs (CSR)."""
        vals = (np.asarray(scale)[:, None, None] * Ke).ravel()[self._keep]
        data = np.bincount(self._slot, weights=vals, minlength=self._nnz)
        return sp.csr_matrix((data, self._indices, self._indptr), shape=(self.n, self.n))

    def vector(self, scale, fe):
        """``sum_e scale_e * f_e`` restricted to free DoFs."""
        vals = (np.asarray(scale)[:, None] * fe).ravel()[self._fkeep]
        return np.bincount(self._fidx, weights=vals, minlength=self.n)

    def gather(self, v_free):
        """Element vectors (m, 8) from a free-DoF vector; fixed DoFs read as zero."""
        full = np.zeros(self.ndof)
        full[self.free] = v_free
        return full[self.edofs]


@dataclass
class GlobalSystem:
    K: sp.csr_matrix
    f: np.ndarray
    dofs: np.ndarray


def assemble(assembler, scale, Ke, fe=None):
    """Assemble ``K(x) = sum x_e K_e`` and ``f(x) = sum x_e f_e`` over free DoFs."""
    scale = np.asarray(scale, dtype=float)
    if scale.shape[0] != Ke.shape[0]:
        raise ValueError("one scale factor per element required")
    K = assembler.matrix(scale, Ke)
    f = assembler.vector(scale, fe) if fe is not None else np.zeros(assembler.n)
    return GlobalSystem(K, f, assembler.free)
