import numpy as np
import pytest

from selcomp.equilibrium import NewtonSettings
from selcomp.evaluate import (
    KinematicsTrace,
    format_report,
    load_sweep,
    performance_report,
    trace_natural_kinematics,
)
from selcomp.modal import condense, eigen
from selcomp.structure import ParameterizedStructure


@pytest.fixture
def gray(small_structure):
    return np.linspace(0.3, 1.0, small_structure.n_elements)


class TestTrace:
    def test_linear_structure_is_a_ray(self, small_problem, gray):
        lin = ParameterizedStructure(small_problem.mesh, small_problem.material, force_linear=True)
        tr = trace_natural_kinematics(small_problem, gray, 0.05, 12, structure=lin)
        assert tr.status == "complete" and len(tr.points) == 12
        d = tr.points[-1] / np.linalg.norm(tr.points[-1])
        resid = tr.points - np.outer(tr.points @ d, d)
        assert np.abs(resid).max() < 1e-9

    def test_step_length_and_continuity(self, small_problem, small_structure, gray):
        tr = trace_natural_kinematics(small_problem, gray, 0.05, 15, structure=small_structure)
        assert np.allclose(tr.points[0], 0.0)
        steps = np.diff(tr.points, axis=0)
        assert np.allclose(np.linalg.norm(steps, axis=1), 0.05, rtol=1e-12)
        assert np.all(np.einsum("ij,ij->i", steps[1:], steps[:-1]) > 0)
        # the first step follows the first mode of the undeformed structure
        ct = eigen(condense(small_structure.state(np.zeros(small_structure.n_free), gray).K, small_problem.partition).K_bar)
        assert abs(steps[0] @ ct.chi1) == pytest.approx(0.05, rel=1e-9)

    def test_orientation_follows_reference(self, small_problem, small_structure, gray):
        a = trace_natural_kinematics(small_problem, gray, 0.05, 3, structure=small_structure)
        b = trace_natural_kinematics(small_problem, gray, 0.05, 3, phi_ref=-small_problem.points[0].phi_bar, structure=small_structure)
        # only the first step mirrors; the nonlinear response differs afterwards
        assert np.allclose(a.points[:2], -b.points[:2], atol=1e-12)

    def test_failure_truncates(self, small_problem, small_structure, gray):
        settings = NewtonSettings(max_subdivisions=0, max_newton_iters=3)
        tr = trace_natural_kinematics(small_problem, gray, 4.0, 10, settings=settings, structure=small_structure)
        assert tr.status == "failed" and len(tr.points) < 10
        assert "equilibrium" in tr.message

    def test_distance(self):
        tr = KinematicsTrace(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), np.ones(3), np.ones((3, 2)), np.ones((3, 2)), 1.0)
        assert tr.distance_to([1.5, 0.3]) == pytest.approx(0.3)
        assert tr.distance_to([3.0, 0.0]) == pytest.approx(1.0)

    def test_invalid(self, small_problem, gray):
        with pytest.raises(ValueError):
            trace_natural_kinematics(small_problem, gray, 0.0, 5)


class TestLoadSweep:
    def test_zero_load(self, small_problem, small_structure, gray):
        sw = load_sweep(small_problem, gray, [np.zeros(2)], ramp_steps=3, structure=small_structure)
        assert np.allclose(sw.trajectories[0], 0.0) and sw.trajectories[0].shape == (4, 2)

    def test_ramp(self, small_problem, small_structure, gray):
        F = np.array([2.0, -1.0])
        sw = load_sweep(small_problem, gray, [F, 2 * F], ramp_steps=4, structure=small_structure)
        assert np.allclose(sw.levels[0], [0, 0.25, 0.5, 0.75, 1.0])
        assert not any(sw.truncated)
        # nonlinear but close to linear for small loads: the ramp midpoint of 2F hits F
        assert np.allclose(sw.trajectories[1][2], sw.trajectories[0][4], rtol=1e-9)

    def test_bad_case(self, small_problem, gray):
        with pytest.raises(ValueError):
            load_sweep(small_problem, gray, [np.zeros(3)])


class TestReport:
    def test_solid_design(self, small_problem, small_structure):
        x = np.ones(small_structure.n_elements)
        rows = performance_report(small_problem, x, structure=small_structure)
        assert [r.index for r in rows] == [1, 2, 3]
        assert all(r.S > 1.0 and 0.0 <= r.delta <= 1.0 for r in rows)
        ct = eigen(condense(small_structure.state(np.zeros(small_structure.n_free), x).K, small_problem.partition).K_bar)
        assert rows[0].delta == pytest.approx(abs(ct.chi1 @ small_problem.points[0].phi_bar))
        text = format_report(rows)
        assert text.splitlines()[0].split() == ["Stationary", "point", "1", "2", "3"]
