"""
Probes - Point time series and their CSV files.

Probes are material points: each is located once on the reference
configuration and then follows its element, so sampling is a P1
interpolation with fixed barycentric weights.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from vms_solid.cases.config import Probe
from vms_solid.cases.diagnostics import nodal_von_mises
from vms_solid.errors import CaseConfigError, ProbeLocationError, ProbeOrderError
from vms_solid.materials import Material
from vms_solid.mesh import Mesh

logger = logging.getLogger(__name__)

LOCATION_TOLERANCE = 1e-10
AXES = {"u_x": 0, "u_y": 1, "u_z": 2}


@dataclass
class ProbeSeries:
    """Time history of one probe."""
    name: str
    label: str
    times: List[float] = field(default_factory=list)
    values: List[float] = field(default_factory=list)

    def append(self, t: float, value: float) -> None:
        """
        Add a sample.

        Raises:
            ProbeOrderError: if t does not exceed the last sample time
        """
        if self.times and not t > self.times[-1]:
            raise ProbeOrderError(f"probe {self.name}: sample at t={t} after t={self.times[-1]}")
        self.times.append(float(t))
        self.values.append(float(value))

    def __len__(self) -> int:
        return len(self.times)


def write_probe_csv(series: ProbeSeries, path: Union[str, Path]) -> Path:
    """
    Write ``t,<field>@(x,y)`` then one row per sample at full precision.

    Raises:
        ValueError: for an empty series
    """
    if not series.times:
        raise ValueError(f"probe {series.name} has no samples")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        f.write(f"t,{series.label}\n")
        for t, value in zip(series.times, series.values):
            f.write(f"{t!r},{value!r}\n")
    return path


def read_probe_csv(path: Union[str, Path], name: Optional[str] = None) -> ProbeSeries:
    """
    Read a file written by write_probe_csv.

    The label is everything after the first comma of the header, so labels
    holding commas such as u_y@(48,60) survive.
    """
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("t,"):
        raise ValueError(f"{path} is not a probe file")
    series = ProbeSeries(name=name or path.stem, label=lines[0].split(",", 1)[1])
    for line in lines[1:]:
        t, value = line.split(",")
        series.append(float(t), float(value))
    return series


def barycentric(mesh: Mesh, element_ids: np.ndarray, point: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of a point in reference elements, (k, d+1)."""
    geometry = mesh.geometry(reference=True)
    n_local = mesh.dim + 1
    offset = point - geometry.centroids[element_ids]
    return 1.0 / n_local + np.einsum("kad,kd->ka", geometry.shape_gradients[element_ids], offset)


def locate_point(mesh: Mesh, point: Sequence[float], start: int = 0) -> Tuple[int, np.ndarray]:
    """
    Element containing a point of the reference configuration.

    Walks from ``start`` across the facet opposite the most negative
    barycentric coordinate; falls back to a search over all elements when
    the walk leaves the mesh.

    Returns:
        (element id, barycentric coordinates)

    Raises:
        ProbeLocationError: the point is outside the domain
    """
    point = np.asarray(point, dtype=float)
    if point.shape != (mesh.dim,):
        raise ProbeLocationError(f"probe point {tuple(point)} does not have {mesh.dim} coordinates")

    neighbors = mesh.element_neighbors()
    element = start
    for _ in range(mesh.n_elements):
        weights = barycentric(mesh, np.array([element]), point)[0]
        worst = int(np.argmin(weights))
        if weights[worst] >= -LOCATION_TOLERANCE:
            return element, weights
        element = int(neighbors[element, worst])
        if element < 0:
            break

    all_weights = barycentric(mesh, np.arange(mesh.n_elements), point)
    best = int(np.argmax(all_weights.min(axis=1)))
    if all_weights[best].min() < -LOCATION_TOLERANCE:
        raise ProbeLocationError(f"probe point {tuple(point)} is outside the domain")
    return best, all_weights[best]


class ProbeSampler:
    """Samples every probe of a case at each completed step."""

    def __init__(self, mesh: Mesh, material: Material, probes: Sequence[Probe]):
        """
        Locate the probes on the reference mesh.

        Raises:
            ProbeLocationError: a probe point lies outside the domain
            CaseConfigError: a displacement component the mesh does not have
        """
        self.material = material
        self.probes = list(probes)
        self.locations: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}
        self.series: Dict[str, ProbeSeries] = {}
        for probe in self.probes:
            if probe.field in AXES and AXES[probe.field] >= mesh.dim:
                raise CaseConfigError(f"probe {probe.name}: {probe.field} needs a {AXES[probe.field] + 1}D mesh")
            element, weights = locate_point(mesh, probe.point)
            self.locations[probe.name] = (mesh.elements[element], weights)
            self.series[probe.name] = ProbeSeries(probe.name, probe.label)
            logger.debug(f"Probe {probe.name} located in element {element}")

    def values(self, mesh: Mesh, U: np.ndarray, P: np.ndarray) -> Dict[str, float]:
        """Current probe values."""
        von_mises = None
        out: Dict[str, float] = {}
        for probe in self.probes:
            nodes, weights = self.locations[probe.name]
            if probe.field in AXES:
                nodal = U[:, AXES[probe.field]]
            elif probe.field == "p":
                nodal = P
            else:
                if von_mises is None:
                    von_mises = nodal_von_mises(mesh, self.material, U)
                nodal = von_mises
            out[probe.name] = float(weights @ nodal[nodes])
        return out

    def sample(self, t: float, mesh: Mesh, U: np.ndarray, P: np.ndarray) -> Dict[str, float]:
        """Append the current values to each series."""
        current = self.values(mesh, U, P)
        for name, value in current.items():
            self.series[name].append(t, value)
        return current

    def write(self, directory: Union[str, Path], case_name: str) -> List[Path]:
        """One ``<case>_<probe>.csv`` per probe."""
        return [
            write_probe_csv(series, Path(directory) / f"{case_name}_{name}.csv")
            for name, series in self.series.items()
        ]
