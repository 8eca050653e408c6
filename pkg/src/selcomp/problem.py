"""Problem files: YAML documents validated against a versioned JSON schema."""

import copy
import dataclasses
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .errors import ProblemFileError
from .fem import Material
from .model import (
    DesignSpace,
    DesiredDeformationFunction,
    Fixity,
    Problem,
    build_mesh,
    discretize_kinematics,
    dof_partition,
    stationary_points_from_table,
)
from .optimizer import OptimizationConfig

SCHEMA_VERSION = 1

_point = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_vector = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_dir = {"enum": ["x", "y"]}

_optimizer_props = {
    "variant": {"enum": [1, 2]},
    "mu_g": {"type": "number", "exclusiveMinimum": 0},
    "t_mu": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, _vector]},
    "V": {"type": "number"},
    "eta": {"type": "number"},
    "zeta": {"type": "number"},
    "kappa": {"type": "number"},
    "l": {"type": "integer"},
    "I_T": {"type": "integer", "minimum": 0},
    "delta_C": {"type": "number", "exclusiveMinimum": 0},
    "s_C": {"type": "integer", "minimum": 1},
    "x_l": {"type": "number"},
    "x_u": {"type": "number"},
    "max_global_iters": {"type": "integer", "minimum": 1},
    "seed_density": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
    "filter_radius": {"type": "number", "exclusiveMinimum": 0},
    "filter_in_elements": {"type": "boolean"},
    "beta_gamma": {"type": "number", "exclusiveMinimum": 0},
    "eta_gamma": {"type": "number", "exclusiveMinimum": 0},
    "eps_F": {"type": "number", "exclusiveMinimum": 0},
    "initial_increments": {"type": "integer", "minimum": 1},
    "volume_weighting": {"enum": ["literal", "flipped", "balanced"]},
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["design_space", "material", "boundary", "active_dofs", "kinematics"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "design_space": {
            "type": "object",
            "required": ["width", "height", "nelx", "nely"],
            "additionalProperties": False,
            "properties": {
                "width": {"type": "number", "exclusiveMinimum": 0},
                "height": {"type": "number", "exclusiveMinimum": 0},
                "nelx": {"type": "integer", "minimum": 1},
                "nely": {"type": "integer", "minimum": 1},
                "thickness": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "material": {
            "type": "object",
            "required": ["E", "nu"],
            "additionalProperties": False,
            "properties": {"E": {"type": "number"}, "nu": {"type": "number"}},
        },
        "boundary": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["kind", "start"],
                "additionalProperties": False,
                "properties": {
                    "kind": {"enum": ["clamp", "roller", "symmetry"]},
                    "start": _point,
                    "end": _point,
                    "dofs": {"type": "array", "items": _dir, "minItems": 1, "uniqueItems": True},
                },
            },
        },
        "active_dofs": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "object",
                "required": ["node", "direction"],
                "additionalProperties": False,
                "properties": {"node": _point, "direction": _dir},
            },
        },
        "kinematics": {
            "type": "object",
            "additionalProperties": False,
            "oneOf": [
                {"required": ["polynomials", "bounds", "alphas"], "not": {"required": ["stationary_points"]}},
                {"required": ["stationary_points"], "not": {"required": ["polynomials"]}},
            ],
            "properties": {
                "polynomials": {"type": "array", "items": _vector, "minItems": 2},
                "bounds": _point,
                "alphas": _vector,
                "stationary_points": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["u_a", "phi_bar"],
                        "additionalProperties": False,
                        "properties": {"u_a": _vector, "phi_bar": _vector},
                    },
                },
            },
        },
        "optimizer": {"type": "object", "additionalProperties": False, "properties": _optimizer_props},
        "evaluation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "beta": {"type": "number", "exclusiveMinimum": 0},
                "n_s": {"type": "integer", "minimum": 1},
                "ramp_steps": {"type": "integer", "minimum": 1},
                "load_cases": {"type": "array", "items": _vector},
            },
        },
    },
}

EVALUATION_DEFAULTS = {"beta": 0.1, "n_s": 100, "ramp_steps": 20, "load_cases": []}


def optimizer_defaults():
    """Optimizer block defaults (the ``OptimizationConfig`` field defaults)."""
    out = {}
    for f in dataclasses.fields(OptimizationConfig):
        if f.name == "t_mu":
            continue
        out[f.name] = f.default
    return out


def _mark(node, path):
    """Line (1-based) of the YAML node addressed by ``path``, or of the closest parent."""
    line = node.start_mark.line + 1
    for key in path:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == key:
                    nxt = v
                    break
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            nxt = node.value[key]
        else:
            nxt = None
        if nxt is None:
            break
        node = nxt
        line = node.start_mark.line + 1
    return line


def _field(path):
    return ".".join(str(p) for p in path) or "<root>"


@dataclass
class ProblemFile:
    """A validated problem document with every default filled in."""

    data: dict
    source: str = "<string>"

    @property
    def name(self):
        return self.data["name"]

    def to_yaml(self):
        return yaml.safe_dump(self.data, sort_keys=True, default_flow_style=None)

    def optimization_config(self, **overrides):
        opts = dict(self.data["optimizer"])
        if "t_mu" in opts and isinstance(opts["t_mu"], list):
            opts["t_mu"] = tuple(opts["t_mu"])
        opts.update(overrides)
        return OptimizationConfig(**opts)

    def build(self):
        """Construct the mesh, partition and stationary points."""
        d = self.data
        try:
            space = DesignSpace(**d["design_space"])
        except ValueError as exc:
            raise ProblemFileError(f"design_space: {exc}") from exc
        try:
            material = Material(d["material"]["E"], d["material"]["nu"])
        except ValueError as exc:
            raise ProblemFileError(f"material: {exc}") from exc
        fixities = []
        for i, b in enumerate(d["boundary"]):
            kw = {"start": tuple(b["start"]), "kind": b["kind"]}
            if "end" in b:
                kw["end"] = tuple(b["end"])
            if "dofs" in b:
                kw["dofs"] = tuple(b["dofs"])
            elif b["kind"] == "roller":
                raise ProblemFileError(f"boundary.{i}: roller needs 'dofs'")
            fixities.append(Fixity(**kw))
        try:
            mesh = build_mesh(space, fixities)
        except ValueError as exc:
            raise ProblemFileError(f"boundary: {exc}") from exc
        try:
            active = [mesh.dof(a["node"], a["direction"]) for a in d["active_dofs"]]
            part = dof_partition(mesh, active)
        except ValueError as exc:
            raise ProblemFileError(f"active_dofs: {exc}") from exc
        kin = d["kinematics"]
        try:
            if "stationary_points" in kin:
                rows = [(p["u_a"], p["phi_bar"]) for p in kin["stationary_points"]]
                points = stationary_points_from_table(rows)
            else:
                func = DesiredDeformationFunction.from_polynomials(kin["polynomials"], kin["bounds"])
                points = discretize_kinematics(func, kin["alphas"])
            problem = Problem(mesh, material, part, points, d["name"])
        except ValueError as exc:
            raise ProblemFileError(f"kinematics: {exc}") from exc
        try:
            self.optimization_config()
        except (TypeError, ValueError) as exc:
            raise ProblemFileError(f"optimizer: {exc}") from exc
        return problem


def parse_problem_text(text, source="<string>"):
    """Parse and validate a YAML problem document.

    Raises
    ------
    ProblemFileError
        With the offending field path and source line.
    """
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ProblemFileError(f"{source}: malformed YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ProblemFileError(f"{source}: top level must be a mapping")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: (len(e.path), list(map(str, e.path))))
    if errors:
        e = errors[0]
        path = list(e.path)
        if e.validator == "required":
            missing = [r for r in e.validator_value if r not in e.instance]
            msg = f"missing required block/field {missing[0]!r}" if missing else e.message
        else:
            msg = e.message
        raise ProblemFileError(f"{source}:{_mark(node, path)}: {_field(path)}: {msg}")

    data = copy.deepcopy(raw)
    data.setdefault("schema_version", SCHEMA_VERSION)
    data.setdefault("name", Path(source).stem if source != "<string>" else "problem")
    data["design_space"].setdefault("thickness", 1.0)
    data["optimizer"] = {**optimizer_defaults(), **data.get("optimizer", {})}
    data["evaluation"] = {**EVALUATION_DEFAULTS, **data.get("evaluation", {})}
    for k, v in data["optimizer"].items():
        if isinstance(v, int) and not isinstance(v, bool) and isinstance(optimizer_defaults().get(k), float):
            data["optimizer"][k] = float(v)
    pf = ProblemFile(data, source)
    pf.build()
    return pf


def parse_problem(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemFileError(f"cannot read {path}: {exc}") from exc
    return parse_problem_text(text, str(path))


def bundled_problems():
    """Paths of the example problem files shipped with the package."""
    here = Path(__file__).parent / "problems"
    return sorted(here.glob("*.yaml"))


def read_density(path, problem):
    """Density grid written by ``synthesize`` (``nely`` rows of ``nelx`` values)."""
    try:
        x = np.loadtxt(path, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ProblemFileError(f"cannot read density field {path}: {exc}") from exc
    s = problem.mesh.space
    if x.shape != (s.nely, s.nelx):
        raise ProblemFileError(f"density field has shape {x.shape}, grid needs {(s.nely, s.nelx)}")
    if np.any(x <= 0) or np.any(x > 1):
        raise ProblemFileError("densities must lie in (0, 1]")
    return x.ravel()
