"""
Case configuration - Parse, validate and serialize case files.

Case file format (one assignment per line):

    # comment
    case.preset = "cook_static"
    mesh.n = 8
    material.nu = 0.4999
    bc.clamp.kind = "dirichlet"
    bc.clamp.value = (0.0, 0.0)
    probe.tip_a.point = (48.0, 60.0)

Strings are quoted, vectors are parenthesized tuples, booleans are
true/false. Unknown keys are errors. A ``case.preset`` line pulls in a
preset before the other keys apply, wherever it appears in the file.
"""

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from vms_solid.errors import CaseConfigError
from vms_solid.fem import BodyForce, BoundaryCondition, DirichletBC, RAMPS, TractionBC
from vms_solid.materials import MATERIAL_KINDS, Material
from vms_solid.mesh import Mesh, generate_box_mesh, generate_cook_mesh
from vms_solid.solver import LINEAR_SOLVERS, LinearSolverConfig, SolverConfig
from vms_solid.timestepping import SCHEMES, STATIC
from vms_solid.vms import TAU_MODELS, StabilizationParams

logger = logging.getLogger(__name__)

GEOMETRY_KINDS = ("cook", "box", "gmsh")
BC_KINDS = ("dirichlet", "traction", "body_force")
PROBE_FIELDS = ("u_x", "u_y", "u_z", "p", "von_mises")

# value kinds: str, float, int, bool, vector (floats), ivector (ints)
KEY_TYPES: Dict[str, str] = {
    "case.name": "str",
    "case.preset": "str",
    "geometry.kind": "str",
    "geometry.scale": "float",
    "geometry.extents": "vector",
    "geometry.origin": "vector",
    "geometry.rotation_angle": "float",
    "geometry.rotation_axis": "vector",
    "geometry.rotation_center": "vector",
    "geometry.file": "str",
    "mesh.n": "int",
    "mesh.subdivisions": "ivector",
    "material.kind": "str",
    "material.E": "float",
    "material.nu": "float",
    "material.rho0": "float",
    "initial.velocity": "vector",
    "initial.velocity_gradient": "vector",
    "initial.velocity_origin": "vector",
    "time.scheme": "str",
    "time.dt": "float",
    "time.t_end": "float",
    "stabilization.alpha": "float",
    "stabilization.model": "str",
    "newton.tol": "float",
    "newton.max_iter": "int",
    "linear.kind": "str",
    "linear.tol": "float",
    "linear.max_iter": "int",
    "linear.restart": "int",
    "output.vtk_every": "int",
    "output.prefix": "str",
}

BC_KEY_TYPES: Dict[str, str] = {
    "kind": "str",
    "tag": "str",
    "value": "vector",
    "components": "ivector",
    "ramp": "str",
    "ramp_time": "float",
    "gravity": "bool",
}

PROBE_KEY_TYPES: Dict[str, str] = {
    "point": "vector",
    "field": "str",
}

MANDATORY_KEYS = (
    "geometry.kind",
    "material.kind",
    "material.E",
    "material.nu",
    "material.rho0",
    "time.scheme",
    "time.dt",
    "time.t_end",
)


@dataclass(frozen=True)
class Probe:
    """Point sampled every step; located on the reference configuration."""
    name: str
    point: Tuple[float, ...]
    field: str

    @property
    def label(self) -> str:
        coords = ",".join(f"{c:g}" for c in self.point)
        return f"{self.field}@({coords})"


@dataclass
class CaseConfig:
    """
    Flat, typed ``section.key`` values of one case.

    ``lines`` remembers where each key was set in the source file so that
    later validation errors can point at it.
    """
    values: Dict[str, Any] = field(default_factory=dict)
    lines: Dict[str, int] = field(default_factory=dict, compare=False)

    def get(self, key: str, default: Any = None) -> Any:
        return self.values.get(key, default)

    def require(self, key: str) -> Any:
        if key not in self.values:
            raise CaseConfigError(f"missing mandatory key: {key}")
        return self.values[key]

    def line_of(self, key: str) -> Optional[int]:
        return self.lines.get(key)

    @property
    def name(self) -> str:
        return str(self.values.get("case.name") or self.values.get("case.preset") or "case")

    def group_names(self, section: str) -> List[str]:
        """Names of bc.<name> or probe.<name> groups in first-seen order."""
        names: List[str] = []
        prefix = section + "."
        for key in self.values:
            if key.startswith(prefix):
                name = key.split(".")[1]
                if name not in names:
                    names.append(name)
        return names

    def group(self, section: str, name: str) -> Dict[str, Any]:
        prefix = f"{section}.{name}."
        return {key[len(prefix):]: value for key, value in self.values.items() if key.startswith(prefix)}

    @property
    def material(self) -> Material:
        return build_material(self)

    @property
    def probes(self) -> List[Probe]:
        return build_probes(self)

    def merged(self, values: Dict[str, Any], lines: Optional[Dict[str, int]] = None) -> "CaseConfig":
        """New config with ``values`` applied on top."""
        return CaseConfig(values={**self.values, **values}, lines={**self.lines, **(lines or {})})

    def with_defaults(self, defaults: Dict[str, Any]) -> "CaseConfig":
        """New config where ``defaults`` fill the keys left unset."""
        return CaseConfig(values={**defaults, **self.values}, lines=dict(self.lines))


def key_type(key: str) -> str:
    """
    Value kind of a case key.

    Raises:
        CaseConfigError: unknown key
    """
    if key in KEY_TYPES:
        return KEY_TYPES[key]
    parts = key.split(".")
    if len(parts) == 3 and parts[0] == "bc" and parts[2] in BC_KEY_TYPES:
        return BC_KEY_TYPES[parts[2]]
    if len(parts) == 3 and parts[0] == "probe" and parts[2] in PROBE_KEY_TYPES:
        return PROBE_KEY_TYPES[parts[2]]
    raise CaseConfigError(f"unknown key: {key}")


class CaseParser:
    """Line-oriented parser for case files and --set overrides."""

    # Line patterns
    ASSIGNMENT_PATTERN = re.compile(r"^([A-Za-z_][\w]*(?:\.[A-Za-z_][\w]*)+)\s*=\s*(.+?)\s*$")
    VECTOR_PATTERN = re.compile(r"^\((.*)\)$")
    STRING_PATTERN = re.compile(r'^"([^"]*)"$')
    COMMENT_PATTERN = re.compile(r"\s*#.*$")

    def parse_value(self, key: str, raw: str, line: Optional[int] = None) -> Any:
        """Convert the text of a value to the type of its key."""
        kind = key_type(key)
        raw = raw.strip()
        try:
            if kind == "str":
                match = self.STRING_PATTERN.match(raw)
                return match.group(1) if match else raw
            if kind == "float":
                return float(raw)
            if kind == "int":
                return int(raw)
            if kind == "bool":
                if raw.lower() not in ("true", "false"):
                    raise ValueError(f"expected true or false, got {raw}")
                return raw.lower() == "true"
            match = self.VECTOR_PATTERN.match(raw)
            if not match:
                raise ValueError(f"expected a parenthesized tuple, got {raw}")
            items = [item.strip() for item in match.group(1).split(",") if item.strip()]
            if kind == "ivector":
                return tuple(int(item) for item in items)
            return tuple(float(item) for item in items)
        except ValueError as e:
            raise CaseConfigError(f"invalid value for {key}: {e}", line) from e

    def parse_assignments(self, text: str) -> Tuple[Dict[str, Any], Dict[str, int]]:
        """Typed values and line numbers of every assignment in a file."""
        values: Dict[str, Any] = {}
        lines: Dict[str, int] = {}
        for number, raw_line in enumerate(text.splitlines(), start=1):
            line = self._strip_comment(raw_line).strip()
            if not line:
                continue
            match = self.ASSIGNMENT_PATTERN.match(line)
            if not match:
                raise CaseConfigError(f"syntax error: {raw_line.strip()}", number)
            key, raw = match.group(1), match.group(2)
            try:
                key_type(key)
            except CaseConfigError as e:
                raise CaseConfigError(str(e), number) from e
            if key in values:
                raise CaseConfigError(f"duplicate key: {key}", number)
            values[key] = self.parse_value(key, raw, number)
            lines[key] = number
        return values, lines

    def parse_override(self, text: str) -> Tuple[str, Any]:
        """``section.key=value`` from the command line."""
        match = self.ASSIGNMENT_PATTERN.match(text.strip())
        if not match:
            raise CaseConfigError(f"override must look like section.key=value, got '{text}'")
        key = match.group(1)
        return key, self.parse_value(key, match.group(2))

    def _strip_comment(self, line: str) -> str:
        # '#' inside a quoted string is kept
        in_string = False
        for index, char in enumerate(line):
            if char == '"':
                in_string = not in_string
            elif char == "#" and not in_string:
                return line[:index]
        return line


def format_value(key: str, value: Any) -> str:
    """Text form of a typed value, the inverse of CaseParser.parse_value."""
    kind = key_type(key)
    if kind == "str":
        return f'"{value}"'
    if kind == "float":
        return repr(float(value))
    if kind == "int":
        return str(int(value))
    if kind == "bool":
        return "true" if value else "false"
    if kind == "ivector":
        return "(" + ", ".join(str(int(v)) for v in value) + ")"
    return "(" + ", ".join(repr(float(v)) for v in value) + ")"


def coerce_value(key: str, value: Any) -> Any:
    """Normalize a YAML or programmatic value to the type of its key."""
    kind = key_type(key)
    if kind == "str":
        return str(value)
    if kind == "float":
        return float(value)
    if kind == "int":
        return int(value)
    if kind == "bool":
        return bool(value)
    if kind == "ivector":
        return tuple(int(v) for v in value)
    return tuple(float(v) for v in value)


def flatten_case(nested: Dict[str, Any]) -> Dict[str, Any]:
    """Nested preset mapping -> typed flat ``section.key`` values."""
    flat: Dict[str, Any] = {}
    for section, body in nested.items():
        if section in ("bc", "probe"):
            for name, group in (body or {}).items():
                for key, value in group.items():
                    full = f"{section}.{name}.{key}"
                    flat[full] = coerce_value(full, value)
        else:
            for key, value in (body or {}).items():
                full = f"{section}.{key}"
                flat[full] = coerce_value(full, value)
    return flat


def parse_case(text: str, base: Optional[CaseConfig] = None) -> CaseConfig:
    """
    Parse and validate a case file.

    Args:
        text: Case file contents
        base: Defaults applied underneath the file (and its preset)

    Returns:
        Validated CaseConfig

    Raises:
        CaseConfigError: syntax error or unknown key (with line number),
            missing mandatory key, invalid combination
        UnknownPresetError: case.preset names no preset
        ModuliRangeError: material constants out of range
    """
    from vms_solid.cases.presets import preset

    values, lines = CaseParser().parse_assignments(text)
    config = base or CaseConfig()
    if "case.preset" in values:
        try:
            config = config.merged(preset(values["case.preset"]).values)
        except CaseConfigError as e:
            raise type(e)(str(e), lines["case.preset"]) from e
    config = config.merged(values, lines)
    validate_case(config)
    return config


def serialize_case(config: CaseConfig) -> str:
    """Case file text that parses back to the same values."""
    out = [f"# case {config.name}"]
    for key, value in config.values.items():
        out.append(f"{key} = {format_value(key, value)}")
    return "\n".join(out) + "\n"


def apply_overrides(config: CaseConfig, overrides: Sequence[str]) -> CaseConfig:
    """Apply ``section.key=value`` overrides and re-validate."""
    parser = CaseParser()
    values = dict(parser.parse_override(item) for item in overrides)
    updated = config.merged(values)
    validate_case(updated)
    return updated


def _fail(config: CaseConfig, key: str, message: str) -> None:
    raise CaseConfigError(message, config.line_of(key))


def validate_case(config: CaseConfig) -> None:
    """
    Check mandatory keys and value ranges.

    Raises:
        CaseConfigError: invalid or incomplete case
        ModuliRangeError: material constants out of range
    """
    for key in MANDATORY_KEYS:
        if key not in config.values:
            raise CaseConfigError(f"missing mandatory key: {key}")

    geometry = config.get("geometry.kind")
    if geometry not in GEOMETRY_KINDS:
        _fail(config, "geometry.kind", f"geometry.kind must be one of {GEOMETRY_KINDS}, got {geometry}")
    if geometry == "gmsh" and not config.get("geometry.file"):
        _fail(config, "geometry.kind", "gmsh geometry needs geometry.file")
    if geometry != "gmsh" and config.get("geometry.file"):
        _fail(config, "geometry.file", "geometry.file is only valid with geometry.kind = \"gmsh\"")
    if geometry == "box":
        extents = config.get("geometry.extents")
        subdivisions = config.get("mesh.subdivisions")
        if extents is None or subdivisions is None:
            _fail(config, "geometry.kind", "box geometry needs geometry.extents and mesh.subdivisions")
        if len(extents) != len(subdivisions) or len(extents) not in (2, 3):
            _fail(config, "mesh.subdivisions", "geometry.extents and mesh.subdivisions need 2 or 3 matching entries")
    if geometry == "cook" and int(config.get("mesh.n", 16)) < 1:
        _fail(config, "mesh.n", "mesh.n must be >= 1")

    if config.get("material.kind") not in MATERIAL_KINDS:
        _fail(config, "material.kind", f"material.kind must be one of {MATERIAL_KINDS}")
    build_material(config)

    try:
        build_solver_config(config)
    except ValueError as e:
        raise CaseConfigError(str(e)) from e
    if config.get("time.t_end") < config.get("time.dt"):
        _fail(config, "time.t_end", "time.t_end must be at least time.dt")

    for name in config.group_names("bc"):
        group = config.group("bc", name)
        kind = group.get("kind")
        if kind not in BC_KINDS:
            _fail(config, f"bc.{name}.kind", f"bc.{name}.kind must be one of {BC_KINDS}")
        if kind in ("dirichlet", "traction") and "tag" not in group:
            _fail(config, f"bc.{name}.kind", f"bc.{name} needs a tag")
        if "value" not in group:
            _fail(config, f"bc.{name}.kind", f"bc.{name} needs a value")
        if group.get("ramp", "constant") not in RAMPS:
            _fail(config, f"bc.{name}.ramp", f"bc.{name}.ramp must be one of {RAMPS}")
        if group.get("ramp_time", 1.0) <= 0.0:
            _fail(config, f"bc.{name}.ramp_time", f"bc.{name}.ramp_time must be positive")

    for name in config.group_names("probe"):
        group = config.group("probe", name)
        if "point" not in group or "field" not in group:
            _fail(config, f"probe.{name}.point", f"probe.{name} needs point and field")
        if group["field"] not in PROBE_FIELDS:
            _fail(config, f"probe.{name}.field", f"probe.{name}.field must be one of {PROBE_FIELDS}")


def build_material(config: CaseConfig) -> Material:
    return Material.from_constants(
        config.require("material.kind"),
        config.require("material.E"),
        config.require("material.nu"),
        config.require("material.rho0"),
    )


def build_solver_config(config: CaseConfig) -> SolverConfig:
    """SolverConfig from the time, newton, linear and stabilization sections."""
    linear_kind = config.get("linear.kind", "direct")
    if linear_kind not in LINEAR_SOLVERS:
        _fail(config, "linear.kind", f"linear.kind must be one of {LINEAR_SOLVERS}")
    model = config.get("stabilization.model", "static")
    if model not in TAU_MODELS:
        _fail(config, "stabilization.model", f"stabilization.model must be one of {TAU_MODELS}")
    scheme = config.require("time.scheme")
    if scheme not in SCHEMES:
        _fail(config, "time.scheme", f"time.scheme must be one of {SCHEMES}")

    linear = LinearSolverConfig(
        kind=linear_kind,
        tol=config.get("linear.tol", 1e-10),
        max_iter=config.get("linear.max_iter", 200),
        restart=config.get("linear.restart", 50),
    )
    return SolverConfig(
        scheme=scheme,
        dt=config.require("time.dt"),
        newton_tol=config.get("newton.tol", 1e-8),
        newton_max_iter=config.get("newton.max_iter", 25),
        linear=linear,
        stabilization=StabilizationParams(
            alpha=config.get("stabilization.alpha", 1.0),
            model=model,
        ),
    )


def build_mesh(config: CaseConfig, base_dir: Optional[Path] = None) -> Mesh:
    """
    Mesh described by the geometry and mesh sections.

    Raises:
        CaseConfigError: missing mesh file
        MeshFormatError: malformed mesh file
    """
    kind = config.require("geometry.kind")
    if kind == "cook":
        return generate_cook_mesh(int(config.get("mesh.n", 16)), scale=config.get("geometry.scale", 1.0))
    if kind == "box":
        return generate_box_mesh(
            config.require("geometry.extents"),
            config.require("mesh.subdivisions"),
            origin=config.get("geometry.origin"),
            rotation_angle=config.get("geometry.rotation_angle", 0.0),
            rotation_axis=config.get("geometry.rotation_axis"),
            rotation_center=config.get("geometry.rotation_center"),
        )

    from vms_solid.io.gmsh import read_gmsh

    path = Path(config.require("geometry.file"))
    if not path.is_absolute() and base_dir is not None:
        path = base_dir / path
    if not path.exists():
        _fail(config, "geometry.file", f"mesh file not found: {path}")
    with open(path, "rb") as f:
        return read_gmsh(f.read())


def build_boundary_conditions(config: CaseConfig, mesh: Mesh) -> List[BoundaryCondition]:
    """
    Boundary conditions of the bc.<name> groups.

    Raises:
        CaseConfigError: tag not present in the mesh, or wrong vector length
    """
    bcs: List[BoundaryCondition] = []
    tags = set(mesh.tags)
    for name in config.group_names("bc"):
        group = config.group("bc", name)
        kind = group["kind"]
        value = tuple(group["value"])
        if len(value) != mesh.dim:
            _fail(config, f"bc.{name}.value", f"bc.{name}.value needs {mesh.dim} entries")
        ramp = group.get("ramp", "constant")
        ramp_time = group.get("ramp_time", 1.0)
        if kind in ("dirichlet", "traction") and group["tag"] not in tags:
            _fail(config, f"bc.{name}.tag", f"bc.{name}.tag '{group['tag']}' not in mesh tags {sorted(tags)}")
        if kind == "dirichlet":
            components = group.get("components")
            if components is not None and any(not 0 <= c < mesh.dim for c in components):
                _fail(config, f"bc.{name}.components", f"bc.{name}.components out of range")
            bcs.append(DirichletBC(group["tag"], value, components, ramp, ramp_time, name))
        elif kind == "traction":
            bcs.append(TractionBC(group["tag"], value, ramp, ramp_time, name))
        else:
            bcs.append(BodyForce(value, group.get("gravity", True), None, ramp, ramp_time, name))
    return bcs


def build_probes(config: CaseConfig) -> List[Probe]:
    return [
        Probe(name, tuple(group["point"]), group["field"])
        for name, group in ((n, config.group("probe", n)) for n in config.group_names("probe"))
    ]


def initial_velocity(config: CaseConfig, points: np.ndarray) -> Optional[np.ndarray]:
    """
    Nodal initial velocity v0 + G (x - x0), or None when the body starts at rest.

    Args:
        config: Case configuration
        points: (N, d) node coordinates

    Returns:
        (N, d) velocities or None
    """
    dim = points.shape[1]
    constant = config.get("initial.velocity")
    gradient = config.get("initial.velocity_gradient")
    if constant is None and gradient is None:
        return None

    velocity = np.zeros_like(points, dtype=float)
    if constant is not None:
        if len(constant) != dim:
            _fail(config, "initial.velocity", f"initial.velocity needs {dim} entries")
        velocity += np.asarray(constant, dtype=float)
    if gradient is not None:
        if len(gradient) != dim * dim:
            _fail(config, "initial.velocity_gradient", f"initial.velocity_gradient needs {dim * dim} entries")
        G = np.asarray(gradient, dtype=float).reshape(dim, dim)
        origin = np.asarray(config.get("initial.velocity_origin", (0.0,) * dim), dtype=float)
        velocity += (points - origin) @ G.T
    return velocity


def step_count(config: CaseConfig) -> int:
    """Number of steps to reach time.t_end (rounded to the nearest whole step)."""
    return max(1, int(math.floor(config.require("time.t_end") / config.require("time.dt") + 0.5)))


def is_static(config: CaseConfig) -> bool:
    return config.require("time.scheme") == STATIC
