"""
VTK - Legacy ASCII UnstructuredGrid writer.

Numbers are written with 17 significant digits so that files reproduce
the in-memory doubles exactly. The second line carries the time stamp and
is the only line that differs between snapshots of an unchanged state.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

# VTK cell type ids
VTK_TRIANGLE = 5
VTK_TETRA = 10


def _fmt(value: float) -> str:
    return f"{value:.17g}"


@dataclass
class VtkSnapshot:
    """Fields of one output instant on the current mesh."""
    points: np.ndarray                  # (N, d) current coordinates
    elements: np.ndarray                # (E, d+1)
    displacement: np.ndarray            # (N, d)
    pressure: np.ndarray                # (N,)
    von_mises: np.ndarray               # (N,)
    J: np.ndarray                       # (E,)
    density: np.ndarray                 # (E,)
    time: float = 0.0
    title: str = "vms_solid"
    point_scalars: Dict[str, np.ndarray] = field(default_factory=dict)
    cell_scalars: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        n_nodes, n_elements = len(self.points), len(self.elements)
        point_fields = {"displacement": self.displacement, "pressure": self.pressure, "von_mises": self.von_mises}
        point_fields.update(self.point_scalars)
        for name, values in point_fields.items():
            if len(values) != n_nodes:
                raise ValueError(f"point field {name} has {len(values)} entries, mesh has {n_nodes} nodes")
        cell_fields = {"J": self.J, "density": self.density}
        cell_fields.update(self.cell_scalars)
        for name, values in cell_fields.items():
            if len(values) != n_elements:
                raise ValueError(f"cell field {name} has {len(values)} entries, mesh has {n_elements} elements")


def _pad3(array: np.ndarray) -> np.ndarray:
    array = np.asarray(array, dtype=float)
    if array.shape[1] == 3:
        return array
    return np.column_stack([array, np.zeros((len(array), 3 - array.shape[1]))])


def _scalars(name: str, values: np.ndarray) -> List[str]:
    out = [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    out.extend(_fmt(v) for v in np.asarray(values, dtype=float))
    return out


def render_vtk(snapshot: VtkSnapshot) -> str:
    """File contents of a snapshot."""
    points = _pad3(snapshot.points)
    elements = np.asarray(snapshot.elements)
    n_nodes, n_elements = len(points), len(elements)
    n_local = elements.shape[1]
    cell_type = VTK_TRIANGLE if n_local == 3 else VTK_TETRA

    out = [
        "# vtk DataFile Version 3.0",
        f"{snapshot.title} t={_fmt(snapshot.time)}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n_nodes} double",
    ]
    out.extend(" ".join(_fmt(v) for v in row) for row in points)
    out.append(f"CELLS {n_elements} {n_elements * (n_local + 1)}")
    out.extend(f"{n_local} " + " ".join(str(int(v)) for v in row) for row in elements)
    out.append(f"CELL_TYPES {n_elements}")
    out.extend(str(cell_type) for _ in range(n_elements))

    out.append(f"POINT_DATA {n_nodes}")
    out.append("VECTORS displacement double")
    out.extend(" ".join(_fmt(v) for v in row) for row in _pad3(snapshot.displacement))
    out.extend(_scalars("pressure", snapshot.pressure))
    out.extend(_scalars("von_mises", snapshot.von_mises))
    for name, values in snapshot.point_scalars.items():
        out.extend(_scalars(name, values))

    out.append(f"CELL_DATA {n_elements}")
    out.extend(_scalars("J", snapshot.J))
    out.extend(_scalars("density", snapshot.density))
    for name, values in snapshot.cell_scalars.items():
        out.extend(_scalars(name, values))
    return "\n".join(out) + "\n"


def write_vtk(snapshot: VtkSnapshot, path: Union[str, Path]) -> Path:
    """
    Write a snapshot as a legacy ASCII VTK file.

    Args:
        snapshot: Fields to write
        path: Target file (parent directories are created)

    Returns:
        The path written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        f.write(render_vtk(snapshot))
    logger.debug(f"Wrote {path}")
    return path


def read_vtk_counts(path: Union[str, Path]) -> Dict[str, int]:
    """Point and cell counts declared in a legacy VTK file."""
    counts: Dict[str, int] = {}
    with open(path) as f:
        for line in f:
            fields = line.split()
            if not fields:
                continue
            if fields[0] == "POINTS":
                counts["points"] = int(fields[1])
            elif fields[0] == "CELLS":
                counts["cells"] = int(fields[1])
    return counts


def snapshot_path(directory: Union[str, Path], prefix: str, step: int, suffix: Optional[str] = None) -> Path:
    """<directory>/<prefix>_<step:05d>.vtk (or a named suffix such as 'final')."""
    label = suffix if suffix is not None else f"{step:05d}"
    return Path(directory) / f"{prefix}_{label}.vtk"
