"""IO package - Mesh import, VTK snapshots and probe time series."""

from vms_solid.io.gmsh import read_gmsh
from vms_solid.io.probes import ProbeSampler, ProbeSeries, read_probe_csv, write_probe_csv
from vms_solid.io.vtk import VtkSnapshot, write_vtk

__all__ = [
    "read_gmsh",
    "ProbeSampler",
    "ProbeSeries",
    "read_probe_csv",
    "write_probe_csv",
    "VtkSnapshot",
    "write_vtk",
]
