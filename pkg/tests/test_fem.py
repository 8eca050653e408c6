import numpy as np
import pytest
import scipy.sparse as sp
import sympy

from selcomp.errors import ElementGeometryError, IncompressibleLimitError, InvertedStateError
from selcomp.fem import (
    Assembler,
    ElementKernels,
    Material,
    element_energy_batch,
    element_linear,
    element_tangent,
    lame,
    plane_stress_neo_hookean,
)
from selcomp.model import DesignSpace, Fixity, build_mesh

from .conftest import UNIT_SQUARE


def random_spd(rng, lo=0.5, hi=2.0):
    Q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
    return Q @ np.diag(rng.uniform(lo, hi, 2)) @ Q.T


def voigt(E):
    return np.array([E[0, 0], E[1, 1], 2.0 * E[0, 1]])


def from_voigt(e):
    return np.array([[e[0], 0.5 * e[2]], [0.5 * e[2], e[1]]])


class TestLame:
    def test_nylon(self):
        lam, mu = lame(3000.0, 0.4)
        assert lam == pytest.approx(4285.714285714, rel=1e-12)
        assert mu == pytest.approx(1071.428571429, rel=1e-12)

    def test_incompressible_limit(self):
        with pytest.raises(IncompressibleLimitError):
            Material(3000.0, 0.5)

    def test_bad_modulus(self):
        with pytest.raises(ValueError):
            Material(0.0, 0.3)


class TestNeoHookean:
    def test_undeformed_is_stress_free(self, nylon):
        C33, S, D, psi = plane_stress_neo_hookean(np.eye(2), nylon)
        assert C33 == pytest.approx(1.0)
        assert np.allclose(S, 0.0, atol=1e-12)
        assert psi == pytest.approx(0.0, abs=1e-12)
        # small-strain limit is the plane-stress Hooke matrix
        assert np.allclose(D, nylon.plane_stress_matrix(), rtol=1e-12)

    def test_stress_from_energy(self, nylon, rng):
        h = 1e-6
        for _ in range(20):
            C = random_spd(rng)
            E = 0.5 * (C - np.eye(2))
            _, S, _, _ = plane_stress_neo_hookean(C, nylon)
            e = voigt(E)
            g = np.zeros(3)
            for k in range(3):
                d = np.zeros(3)
                d[k] = h
                psi_p = plane_stress_neo_hookean(np.eye(2) + 2 * from_voigt(e + d), nylon)[3]
                psi_m = plane_stress_neo_hookean(np.eye(2) + 2 * from_voigt(e - d), nylon)[3]
                g[k] = (psi_p - psi_m) / (2 * h)
            # the engineering shear strain is work-conjugate to S12
            assert np.allclose(g, [S[0, 0], S[1, 1], S[0, 1]], rtol=1e-6, atol=1e-6 * nylon.mu)

    def test_tangent_from_stress(self, nylon, rng):
        h = 1e-7
        for _ in range(20):
            C = random_spd(rng)
            e = voigt(0.5 * (C - np.eye(2)))
            D = plane_stress_neo_hookean(C, nylon)[2]
            Dfd = np.zeros((3, 3))
            for k in range(3):
                d = np.zeros(3)
                d[k] = h
                Sp = plane_stress_neo_hookean(np.eye(2) + 2 * from_voigt(e + d), nylon)[1]
                Sm = plane_stress_neo_hookean(np.eye(2) + 2 * from_voigt(e - d), nylon)[1]
                Dfd[:, k] = [(Sp - Sm)[0, 0], (Sp - Sm)[1, 1], (Sp - Sm)[0, 1]]
            Dfd /= 2 * h
            assert np.linalg.norm(D - Dfd) < 1e-6 * np.linalg.norm(D)

    def test_out_of_plane_stress_vanishes(self, nylon, rng):
        lam, mu = nylon.lam, nylon.mu
        for _ in range(20):
            C = random_spd(rng)
            C33, _, _, _ = plane_stress_neo_hookean(C, nylon)
            J2 = np.linalg.det(C) * C33
            # 3-D compressible neo-Hookean S33
            S33 = lam * J2 / (2 * C33) - (0.5 * lam + mu) / C33 + mu
            assert abs(S33) < 1e-10 * mu

    def test_inverted(self, nylon):
        with pytest.raises(InvertedStateError):
            plane_stress_neo_hookean(np.array([[1.0, 2.0], [2.0, 1.0]]), nylon)


class TestLinearElement:
    def test_unit_square_against_symbolic_integration(self):
        # E = 1, nu = 0: D = diag(1, 1, 1/2)
        xi, eta = sympy.symbols("xi eta")
        N = [(1 - xi) * (1 - eta) / 4, (1 + xi) * (1 - eta) / 4, (1 + xi) * (1 + eta) / 4, (1 - xi) * (1 + eta) / 4]
        # unit square: x = (xi+1)/2, so d/dx = 2 d/dxi, detJ = 1/4
        B = sympy.zeros(3, 8)
        for a, Na in enumerate(N):
            B[0, 2 * a] = 2 * sympy.diff(Na, xi)
            B[1, 2 * a + 1] = 2 * sympy.diff(Na, eta)
            B[2, 2 * a] = 2 * sympy.diff(Na, eta)
            B[2, 2 * a + 1] = 2 * sympy.diff(Na, xi)
        D = sympy.diag(1, 1, sympy.Rational(1, 2))
        K = (B.T * D * B / 4).applyfunc(lambda f: sympy.integrate(f, (xi, -1, 1), (eta, -1, 1)))
        expected = np.array(K.tolist(), dtype=float)
        assert expected[0, 0] == pytest.approx(0.5)
        Ke = element_linear(UNIT_SQUARE, Material(1.0, 0.0))
        assert np.allclose(Ke, expected, atol=1e-14)

    def test_rigid_body_modes(self, nylon):
        Ke = element_linear(UNIT_SQUARE * [2.0, 1.0], nylon)
        w = np.linalg.eigvalsh(Ke)
        assert np.sum(np.abs(w) < 1e-9 * w.max()) == 3
        assert np.all(w > -1e-9 * w.max())

    def test_thickness_scales_linearly(self, nylon):
        assert np.allclose(element_linear(UNIT_SQUARE, nylon, 2.0), 2.0 * element_linear(UNIT_SQUARE, nylon))

    def test_inverted_geometry_rejected(self, nylon):
        with pytest.raises(ElementGeometryError):
            element_linear(UNIT_SQUARE[::-1], nylon)

    def test_patch(self, nylon):
        # 2x2 patch with a displaced interior node; affine field gives no interior force
        space = DesignSpace(2.0, 2.0, 2, 2)
        mesh = build_mesh(space, [Fixity((0, 0))])
        nodes = mesh.nodes.copy()
        nodes[4] += [0.17, -0.11]
        kern = ElementKernels.from_coords(nodes[mesh.elements])
        from selcomp.fem import element_linear_batch

        Ke = element_linear_batch(kern, nylon)
        u = (nodes @ np.array([[1e-3, 2e-4], [-3e-4, 5e-4]])).ravel()
        f = np.zeros(mesh.ndof)
        np.add.at(f, mesh.edofs, np.einsum("eij,ej->ei", Ke, u[mesh.edofs]))
        assert np.allclose(f[8:10], 0.0, atol=1e-12)


class TestNonlinearElement:
    def test_reduces_to_linear_at_rest(self, nylon):
        et = element_tangent(UNIT_SQUARE, np.zeros(8), nylon)
        assert np.allclose(et.K, element_linear(UNIT_SQUARE, nylon), rtol=1e-12, atol=1e-9)
        assert np.allclose(et.f, 0.0)

    def test_rigid_rotation_is_stress_free(self, nylon):
        th = 0.7
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        u = (UNIT_SQUARE @ R.T - UNIT_SQUARE).ravel()
        et = element_tangent(UNIT_SQUARE, u, nylon)
        assert np.allclose(et.f, 0.0, atol=1e-9)

    def test_internal_force_is_energy_gradient(self, nylon, rng):
        kern = ElementKernels.from_coords(UNIT_SQUARE[None])
        u = 0.05 * rng.normal(size=8)
        f = element_tangent(UNIT_SQUARE, u, nylon).f
        h = 1e-6
        g = np.zeros(8)
        for i in range(8):
            d = np.zeros(8)
            d[i] = h
            g[i] = (element_energy_batch(kern, (u + d)[None], nylon)[0] - element_energy_batch(kern, (u - d)[None], nylon)[0]) / (2 * h)
        assert np.allclose(f, g, rtol=1e-6, atol=1e-6 * np.abs(f).max())

    def test_inverted_state(self, nylon):
        u = np.array([0, 0, 0, 0, -1.5, -1.5, 0, 0], dtype=float)
        with pytest.raises(InvertedStateError):
            element_tangent(UNIT_SQUARE, u, nylon)


class TestAssembler:
    def test_matches_dense_assembly(self, nylon, rng):
        space = DesignSpace(3.0, 2.0, 3, 2)
        mesh = build_mesh(space, [Fixity((0, 0), (0, 2))])
        kern = ElementKernels.from_coords(mesh.element_coords)
        from selcomp.fem import element_linear_batch

        Ke = element_linear_batch(kern, nylon)
        x = rng.uniform(0.1, 1.0, mesh.n_elements)
        dense = np.zeros((mesh.ndof, mesh.ndof))
        for e, d in enumerate(mesh.edofs):
            dense[np.ix_(d, d)] += x[e] * Ke[e]
        free = mesh.free_dofs
        asm = Assembler(mesh.edofs, free, mesh.ndof)
        K = asm.matrix(x, Ke)
        assert sp.issparse(K)
        assert np.allclose(K.toarray(), dense[np.ix_(free, free)])
        v = rng.normal(size=free.size)
        fe = np.einsum("eij,ej->ei", Ke, asm.gather(v))
        assert np.allclose(asm.vector(x, fe), K @ v)
