"""
Gmsh - Reader for ASCII MSH 2.2 simplicial meshes.

Supported element types: 1 (2-node line), 2 (3-node triangle),
4 (4-node tetrahedron) and 15 (point, ignored). The highest-dimensional
simplices form the mesh; the next dimension down provides tagged boundary
facets named after their physical group.
"""

import logging
from typing import Dict, List, Tuple, Union

import numpy as np

from vms_solid.errors import MeshFormatError
from vms_solid.mesh import Mesh, find_boundary_facets, fix_orientation

logger = logging.getLogger(__name__)

# gmsh type id -> (topological dimension, node count)
ELEMENT_TYPES = {
    1: (1, 2),
    2: (2, 3),
    4: (3, 4),
    15: (0, 1),
}

UNTAGGED = "untagged"


class _Lines:
    """Cursor over the non-empty lines of a file."""

    def __init__(self, text: str):
        self._lines = [line.strip() for line in text.splitlines() if line.strip()]
        self._index = 0

    def next(self, what: str) -> str:
        if self._index >= len(self._lines):
            raise MeshFormatError(f"unexpected end of file while reading {what}")
        line = self._lines[self._index]
        self._index += 1
        return line

    @property
    def done(self) -> bool:
        return self._index >= len(self._lines)


def _expect_end(lines: _Lines, section: str) -> None:
    end = lines.next(f"$End{section}")
    if end != f"$End{section}":
        raise MeshFormatError(f"malformed section: expected $End{section}, got {end}")


def _count(lines: _Lines, section: str) -> int:
    raw = lines.next(f"{section} count")
    try:
        return int(raw)
    except ValueError as e:
        raise MeshFormatError(f"malformed {section} count: {raw}") from e


def read_gmsh(data: Union[bytes, str]) -> Mesh:
    """
    Parse an ASCII MSH 2.2 file.

    Args:
        data: File contents

    Returns:
        Mesh with positively oriented elements and tagged boundary facets;
        facets without a physical group are tagged "untagged"

    Raises:
        MeshFormatError: malformed sections, unsupported version or element type
        DegenerateElementError: element with zero volume
    """
    try:
        text = data.decode("utf8") if isinstance(data, bytes) else data
    except UnicodeDecodeError as e:
        raise MeshFormatError(f"mesh file is not UTF-8 text: {e}") from e
    lines = _Lines(text)

    physical_names: Dict[int, str] = {}
    node_ids: List[int] = []
    coordinates: List[List[float]] = []
    entities: Dict[int, List[Tuple[List[int], int]]] = {0: [], 1: [], 2: [], 3: []}
    seen_format = False

    while not lines.done:
        header = lines.next("section header")
        if not header.startswith("$") or header.startswith("$End"):
            raise MeshFormatError(f"malformed section header: {header}")
        section = header[1:]

        if section == "MeshFormat":
            fields = lines.next("MeshFormat").split()
            if len(fields) < 2 or not fields[0].startswith("2"):
                raise MeshFormatError(f"unsupported MSH version: {' '.join(fields)}")
            if fields[1] != "0":
                raise MeshFormatError("binary MSH files are not supported")
            seen_format = True
            _expect_end(lines, section)

        elif section == "PhysicalNames":
            for _ in range(_count(lines, section)):
                fields = lines.next("PhysicalNames").split(maxsplit=2)
                if len(fields) != 3:
                    raise MeshFormatError(f"malformed physical name: {' '.join(fields)}")
                try:
                    physical_names[int(fields[1])] = fields[2].strip('"')
                except ValueError as e:
                    raise MeshFormatError(f"malformed physical name: {' '.join(fields)}") from e
            _expect_end(lines, section)

        elif section == "Nodes":
            for _ in range(_count(lines, section)):
                fields = lines.next("Nodes").split()
                if len(fields) != 4:
                    raise MeshFormatError(f"malformed node line: {' '.join(fields)}")
                try:
                    node_ids.append(int(fields[0]))
                    coordinates.append([float(v) for v in fields[1:]])
                except ValueError as e:
                    raise MeshFormatError(f"malformed node line: {' '.join(fields)}") from e
            _expect_end(lines, section)

        elif section == "Elements":
            for _ in range(_count(lines, section)):
                raw = lines.next("Elements")
                try:
                    fields = [int(v) for v in raw.split()]
                except ValueError as e:
                    raise MeshFormatError(f"malformed element line: {raw}") from e
                if len(fields) < 3:
                    raise MeshFormatError(f"malformed element line: {fields}")
                element_type, n_tags = fields[1], fields[2]
                if element_type not in ELEMENT_TYPES:
                    raise MeshFormatError(f"unsupported element type: {element_type}")
                dim, n_nodes = ELEMENT_TYPES[element_type]
                nodes = fields[3 + n_tags:]
                if len(nodes) != n_nodes:
                    raise MeshFormatError(f"element {fields[0]} has {len(nodes)} nodes, expected {n_nodes}")
                physical = fields[3] if n_tags > 0 else 0
                entities[dim].append((nodes, physical))
            _expect_end(lines, section)

        else:
            logger.debug(f"Skipping section ${section}")
            while lines.next(f"$End{section}") != f"$End{section}":
                pass

    if not seen_format:
        raise MeshFormatError("missing $MeshFormat section")

    dim = 3 if entities[3] else 2
    if not entities[dim]:
        raise MeshFormatError("no triangles or tetrahedra in file")

    index_of = {node_id: i for i, node_id in enumerate(node_ids)}
    try:
        raw_elements = np.array([[index_of[n] for n in nodes] for nodes, _ in entities[dim]], dtype=np.int64)
    except KeyError as e:
        raise MeshFormatError(f"element references unknown node {e.args[0]}") from e

    # drop nodes no simplex uses
    used = np.unique(raw_elements)
    renumber = -np.ones(len(node_ids), dtype=np.int64)
    renumber[used] = np.arange(len(used))
    nodes = np.asarray(coordinates, dtype=float)[used, :dim]
    elements = fix_orientation(nodes, renumber[raw_elements])

    tagged: Dict[Tuple[int, ...], str] = {}
    for facet_nodes, physical in entities[dim - 1]:
        ids = [index_of.get(n, -1) for n in facet_nodes]
        if min(ids) < 0 or np.any(renumber[ids] < 0):
            continue
        if physical:
            key = tuple(sorted(renumber[ids].tolist()))
            tagged[key] = physical_names.get(physical, str(physical))

    facets, _ = find_boundary_facets(elements)
    tags = np.array([tagged.get(tuple(sorted(f.tolist())), UNTAGGED) for f in facets], dtype=object)

    logger.info(f"Read gmsh mesh: dim={dim}, {len(nodes)} nodes, {len(elements)} elements, tags={sorted(set(tags))}")
    return Mesh(nodes.copy(), nodes.copy(), elements, facets, tags)
