import json
import textwrap

import numpy as np
import pytest
import yaml

from selcomp.cli import main
from selcomp.errors import ProblemFileError
from selcomp.problem import bundled_problems, parse_problem, parse_problem_text

MINIMAL = textwrap.dedent(
    """\
    design_space: {width: 12, height: 6, nelx: 12, nely: 6}
    material: {E: 3000, nu: 0.4}
    boundary:
      - {kind: clamp, start: [0, 4], end: [0, 6]}
      - {kind: symmetry, start: [0, 0], end: [12, 0]}
    active_dofs:
      - {node: [1, 0], direction: x}
      - {node: [11, 0], direction: x}
    kinematics:
      polynomials: [[1.0], [-1.0]]
      bounds: [0, 1]
      alphas: [0.0, 0.1]
    """
)


@pytest.fixture
def minimal_file(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(MINIMAL + "optimizer: {mu_g: 2.0}\nevaluation: {beta: 0.02, n_s: 5, ramp_steps: 2, load_cases: [[1.0, 0.0]]}\n")
    return p


class TestParse:
    def test_defaults(self):
        pf = parse_problem_text(MINIMAL)
        o = pf.data["optimizer"]
        assert o["eps_F"] == 1e-6 and o["beta_gamma"] == 500 and o["eta_gamma"] == 0.01
        assert o["filter_radius"] == 1.5 and o["eta"] == 3 and o["V"] == 0.3 and o["kappa"] == 0.99
        assert o["I_T"] == 1000 and o["delta_C"] == 0.001 and o["s_C"] == 500
        assert o["x_l"] == 1e-9 and o["x_u"] == 1.0 and o["seed_density"] == 0.5

    def test_round_trip(self):
        pf = parse_problem_text(MINIMAL)
        again = parse_problem_text(pf.to_yaml())
        assert again.data == pf.data
        assert again.to_yaml() == pf.to_yaml()

    def test_missing_block(self):
        text = MINIMAL.split("active_dofs:")[0] + "kinematics:" + MINIMAL.split("kinematics:")[1]
        with pytest.raises(ProblemFileError, match="active_dofs"):
            parse_problem_text(text)

    def test_line_diagnostic(self):
        text = MINIMAL.replace("direction: x}\n  - {node: [11", "direction: z}\n  - {node: [11")
        with pytest.raises(ProblemFileError, match=r":7: active_dofs\.0\.direction"):
            parse_problem_text(text)

    def test_physical_invariant(self):
        with pytest.raises(ProblemFileError, match="material"):
            parse_problem_text(MINIMAL.replace("nu: 0.4", "nu: 0.5"))

    def test_node_off_grid(self):
        with pytest.raises(ProblemFileError, match="active_dofs"):
            parse_problem_text(MINIMAL.replace("[11, 0]", "[30, 0]"))

    def test_stationary_table(self):
        text = MINIMAL.split("kinematics:")[0] + textwrap.dedent(
            """\
            kinematics:
              stationary_points:
                - {u_a: [0, 0], phi_bar: [1, -1]}
                - {u_a: [1, -1.25], phi_bar: [1, -1.5]}
                - {u_a: [2, -3], phi_bar: [1, -2]}
                - {u_a: [3, -5.25], phi_bar: [1, -2.5]}
            """
        )
        pts = parse_problem_text(text).build().points
        expected = [[0.7071, -0.7071], [0.5547, -0.8321], [0.4472, -0.8944], [0.3714, -0.9285]]
        assert np.allclose([p.phi_bar for p in pts], expected, atol=5e-5)
        assert np.allclose(pts[3].u_a, [3, -21 / 4])

    def test_bundled(self):
        names = {p.stem for p in bundled_problems()}
        assert {"inverter_a_v1", "inverter_a_v2", "inverter_b_v1", "inverter_b_v2", "pivot_joint", "shape_adaptive"} <= names
        for p in bundled_problems():
            pf = parse_problem(p)
            assert pf.optimization_config().max_global_iters >= 1


class TestCommands:
    def test_validate(self, minimal_file, capsys):
        assert main(["validate", str(minimal_file)]) == 0
        assert "ok" in capsys.readouterr().out

    def test_validate_error_exit(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("design_space: {width: 1}\n")
        assert main(["-q", "validate", str(p)]) == 2

    def test_synthesize(self, minimal_file, tmp_path):
        out = tmp_path / "run"
        code = main(["-q", "synthesize", str(minimal_file), "--out", str(out), "--max-iters", "3", "--seed-densities", "0.5"])
        assert code == 5  # cap reached before convergence
        man = json.loads((out / "manifest.json").read_text())
        listed = {f["path"] for f in man["files"]}
        assert {"density.txt", "history.csv", "density.png"} <= listed
        assert listed == {p.name for p in out.iterdir()} - {"manifest.json"}
        assert np.loadtxt(out / "density.txt").shape == (6, 12)
        assert len((out / "history.csv").read_text().splitlines()) == 4
        assert man["iterations"] == 3 and not man["converged"]

    def test_infeasible_exit(self, tmp_path):
        p = tmp_path / "inf.yaml"
        p.write_text(MINIMAL + "optimizer: {mu_g: 1.0e-12}\n")
        assert main(["-q", "synthesize", str(p), "--out", str(tmp_path / "o"), "--max-iters", "2"]) == 4
        assert (tmp_path / "o" / "manifest.json").exists()

    def test_evaluate(self, minimal_file, tmp_path):
        dens = tmp_path / "solid.txt"
        np.savetxt(dens, np.ones((6, 12)))
        out = tmp_path / "ev"
        assert main(["-q", "evaluate", str(minimal_file), str(dens), "--out", str(out)]) == 0
        assert len((out / "trace.csv").read_text().splitlines()) == 1 + 5
        man = json.loads((out / "manifest.json").read_text())
        assert {f["path"] for f in man["files"]} >= {"report.txt", "trace.csv", "sweep_1.csv", "trace.png", "selectivity.png"}

    def test_evaluate_without_load_cases(self, tmp_path):
        p = tmp_path / "p.yaml"
        p.write_text(MINIMAL + "evaluation: {n_s: 3, beta: 0.02}\n")
        dens = tmp_path / "d.txt"
        np.savetxt(dens, np.ones((6, 12)))
        assert main(["-q", "evaluate", str(p), str(dens), "--out", str(tmp_path / "e")]) == 0
        man = json.loads((tmp_path / "e" / "manifest.json").read_text())
        assert any("skipped" in n for n in man["notes"])

    def test_evaluate_dimension_mismatch(self, minimal_file, tmp_path):
        dens = tmp_path / "wrong.txt"
        np.savetxt(dens, np.ones((5, 12)))
        assert main(["-q", "evaluate", str(minimal_file), str(dens), "--out", str(tmp_path / "x")]) == 2
