"""
Mesh - Simplicial meshes for the updated Lagrangian solver.

This module provides:
- The Mesh container (current and reference coordinates, connectivity,
  tagged boundary facets)
- Built-in benchmark geometries: Cook's membrane and structured boxes
- Exact P1 element geometry (shape gradients, volume, characteristic length)
- Mesh motion with inversion detection

Triangles carry 3 nodes and tetrahedra 4. Boundary facets are the element
faces owned by exactly one element; each carries a string tag.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from vms_solid.errors import DegenerateElementError, InvertedElementError, MeshInversionError

logger = logging.getLogger(__name__)


# Gradients of the barycentric shape functions on the reference simplex,
# one row per node.
REFERENCE_GRADIENTS = {
    2: np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]),
    3: np.array([[-1.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]),
}

# Kuhn split of a unit cube into 6 tetrahedra along the 0-7 diagonal.
# Local cube vertex index is a + 2b + 4c for offsets (a, b, c).
KUHN_TETRAHEDRA = np.array([
    [0, 1, 3, 7],
    [0, 1, 5, 7],
    [0, 2, 3, 7],
    [0, 2, 6, 7],
    [0, 4, 5, 7],
    [0, 4, 6, 7],
])

BOX_FACE_TAGS = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")

COOK_CORNERS = ((0.0, 0.0), (48.0, 44.0), (48.0, 60.0), (0.0, 44.0))


@dataclass(frozen=True)
class ElementGeometry:
    """Geometry of a single P1 element."""
    shape_gradients: np.ndarray  # (d+1, d): gradient of each nodal shape function
    volume: float
    h: float
    centroid: np.ndarray


@dataclass(frozen=True)
class MeshGeometry:
    """Element geometry evaluated for every element at once."""
    shape_gradients: np.ndarray  # (E, d+1, d)
    volumes: np.ndarray          # (E,)
    h: np.ndarray                # (E,)
    centroids: np.ndarray        # (E, d)

    def element(self, element_id: int) -> ElementGeometry:
        return ElementGeometry(
            shape_gradients=self.shape_gradients[element_id],
            volume=float(self.volumes[element_id]),
            h=float(self.h[element_id]),
            centroid=self.centroids[element_id],
        )


@dataclass(frozen=True)
class Mesh:
    """
    Simplicial mesh in its current and reference configuration.

    Attributes:
        nodes_current: (N, d) coordinates x
        nodes_reference: (N, d) coordinates X of the initial configuration
        elements: (E, d+1) node ids, positively oriented
        boundary_facets: (F, d) node ids of boundary facets
        facet_tags: (F,) tag of each boundary facet
    """
    nodes_current: np.ndarray
    nodes_reference: np.ndarray
    elements: np.ndarray
    boundary_facets: np.ndarray
    facet_tags: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.nodes_reference.shape[1])

    @property
    def n_nodes(self) -> int:
        return int(self.nodes_reference.shape[0])

    @property
    def n_elements(self) -> int:
        return int(self.elements.shape[0])

    @property
    def tags(self) -> List[str]:
        return sorted(set(str(t) for t in self.facet_tags))

    def facets_with_tag(self, tag: str) -> np.ndarray:
        """Boundary facets carrying a tag (possibly empty)."""
        return self.boundary_facets[self.facet_tags == tag]

    def nodes_with_tag(self, tag: str) -> np.ndarray:
        """Sorted ids of the nodes on facets carrying a tag."""
        return np.unique(self.facets_with_tag(tag))

    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.boundary_facets)

    def geometry(self, reference: bool = False) -> MeshGeometry:
        """Element geometry in the current (default) or reference configuration."""
        nodes = self.nodes_reference if reference else self.nodes_current
        return compute_geometry(nodes, self.elements)

    def volumes(self, reference: bool = False) -> np.ndarray:
        nodes = self.nodes_reference if reference else self.nodes_current
        return signed_volumes(nodes, self.elements)

    def element_neighbors(self) -> np.ndarray:
        """(E, d+1) id of the element across the facet opposite each node, -1 on the boundary."""
        n_local = self.elements.shape[1]
        faces = np.sort(element_facets(self.elements), axis=1)
        _, inverse = np.unique(faces, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).reshape(-1)
        order = np.argsort(inverse, kind="stable")
        shared = inverse[order][1:] == inverse[order][:-1]
        first = order[:-1][shared]
        second = order[1:][shared]
        neighbors = -np.ones(faces.shape[0], dtype=np.int64)
        neighbors[first] = second // n_local
        neighbors[second] = first // n_local
        return neighbors.reshape(-1, n_local)


def signed_volumes(nodes: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """Signed simplex volumes (positive for counter-clockwise / right-handed ordering)."""
    dim = nodes.shape[1]
    x = nodes[elements]
    jac = np.swapaxes(x[:, 1:, :] - x[:, :1, :], 1, 2)
    return np.linalg.det(jac) / math.factorial(dim)


def compute_geometry(nodes: np.ndarray, elements: np.ndarray) -> MeshGeometry:
    """
    Exact P1 geometry of every element.

    Args:
        nodes: (N, d) coordinates
        elements: (E, d+1) connectivity

    Returns:
        MeshGeometry with gradients (E, d+1, d), volumes, h = (d! V)^(1/d), centroids

    Raises:
        InvertedElementError: if any element has non-positive volume
    """
    dim = nodes.shape[1]
    x = nodes[elements]
    # jac[:, :, i] = x_{i+1} - x_0
    jac = np.swapaxes(x[:, 1:, :] - x[:, :1, :], 1, 2)
    det = np.linalg.det(jac)
    volumes = det / math.factorial(dim)

    bad = np.flatnonzero(volumes <= 0.0)
    if bad.size:
        element_id = int(bad[0])
        raise InvertedElementError(
            f"inverted element {element_id} (volume {volumes[element_id]:.3e})", element_id
        )

    gradients = REFERENCE_GRADIENTS[dim] @ np.linalg.inv(jac)
    h = (math.factorial(dim) * volumes) ** (1.0 / dim)
    return MeshGeometry(
        shape_gradients=gradients,
        volumes=volumes,
        h=h,
        centroids=x.mean(axis=1),
    )


def element_facets(elements: np.ndarray) -> np.ndarray:
    """(E*(d+1), d) facets; entry e*(d+1)+a is the facet opposite local node a of element e."""
    n_local = elements.shape[1]
    faces = np.stack([np.delete(elements, a, axis=1) for a in range(n_local)], axis=1)
    return faces.reshape(-1, n_local - 1)


def find_boundary_facets(elements: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Facets owned by exactly one element.

    Returns:
        (facets, owners): facet node ids (F, d) and owning element ids (F,)
    """
    n_local = elements.shape[1]
    faces = element_facets(elements)
    _, inverse, counts = np.unique(
        np.sort(faces, axis=1), axis=0, return_inverse=True, return_counts=True
    )
    inverse = np.asarray(inverse).reshape(-1)
    single = counts[inverse] == 1
    return faces[single], np.flatnonzero(single) // n_local


def fix_orientation(nodes: np.ndarray, elements: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """
    Swap the first two nodes of negatively oriented elements.

    Raises:
        DegenerateElementError: if an element has (numerically) zero volume
    """
    elements = np.array(elements, dtype=np.int64, copy=True)
    volumes = signed_volumes(nodes, elements)
    extent = float(np.max(np.ptp(nodes, axis=0))) if len(nodes) else 1.0
    tolerance = rtol * extent ** nodes.shape[1]

    degenerate = np.flatnonzero(np.abs(volumes) <= tolerance)
    if degenerate.size:
        element_id = int(degenerate[0])
        raise DegenerateElementError(f"degenerate element {element_id} (zero volume)", element_id)

    flipped = volumes < 0.0
    if np.any(flipped):
        logger.debug(f"Reoriented {int(flipped.sum())} elements")
        elements[flipped, 0], elements[flipped, 1] = (
            elements[flipped, 1].copy(),
            elements[flipped, 0].copy(),
        )
    return elements


def generate_cook_mesh(n: int, scale: float = 1.0) -> Mesh:
    """
    Structured triangulation of Cook's membrane.

    The trapezoid has corners (0,0), (48,44), (48,60), (0,44), all
    multiplied by ``scale``. Each of the n x n quadrilateral cells is split
    into 2 triangles along its (0,0)-(1,1) diagonal.

    Args:
        n: Cells per side (n >= 1)
        scale: Uniform coordinate factor (0.1 for the transient variant)

    Returns:
        Mesh with (n+1)^2 nodes, 2 n^2 triangles and tags left/right/top/bottom
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")

    s, t = np.meshgrid(np.linspace(0.0, 1.0, n + 1), np.linspace(0.0, 1.0, n + 1))
    s = s.ravel()
    t = t.ravel()
    x = 48.0 * s
    y = 44.0 * s + t * (44.0 + 16.0 * s - 44.0 * s)
    nodes = scale * np.column_stack([x, y])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    n00 = (j * (n + 1) + i).ravel()
    n10 = n00 + 1
    n01 = n00 + n + 1
    n11 = n01 + 1
    elements = np.concatenate([
        np.column_stack([n00, n10, n11]),
        np.column_stack([n00, n11, n01]),
    ])

    col = np.arange((n + 1) ** 2) % (n + 1)
    row = np.arange((n + 1) ** 2) // (n + 1)

    def tag_of(facet: np.ndarray) -> str:
        if np.all(col[facet] == 0):
            return "left"
        if np.all(col[facet] == n):
            return "right"
        if np.all(row[facet] == 0):
            return "bottom"
        return "top"

    facets, _ = find_boundary_facets(elements)
    tags = np.array([tag_of(f) for f in facets], dtype=object)
    logger.debug(f"Cook mesh n={n}: {len(nodes)} nodes, {len(elements)} triangles")
    return Mesh(nodes.copy(), nodes.copy(), elements, facets, tags)


def rotation_matrix(dim: int, angle_deg: float, axis: Optional[Sequence[float]] = None) -> np.ndarray:
    """Rotation by ``angle_deg`` about ``axis`` (3D) or about the z axis (2D)."""
    angle = math.radians(angle_deg)
    if dim == 2:
        c, s = math.cos(angle), math.sin(angle)
        return np.array([[c, -s], [s, c]])
    axis_vec = np.asarray(axis if axis is not None else (0.0, 0.0, 1.0), dtype=float)
    norm = np.linalg.norm(axis_vec)
    if norm == 0.0:
        raise ValueError("rotation axis must be non-zero")
    return Rotation.from_rotvec(angle * axis_vec / norm).as_matrix()


def generate_box_mesh(
    extents: Sequence[float],
    subdivisions: Sequence[int],
    origin: Optional[Sequence[float]] = None,
    rotation_angle: float = 0.0,
    rotation_axis: Optional[Sequence[float]] = None,
    rotation_center: Optional[Sequence[float]] = None,
) -> Mesh:
    """
    Structured simplicial mesh of a rectangle or box.

    Each grid cell becomes 2 triangles (2D) or 6 Kuhn tetrahedra (3D).
    Faces are tagged xmin, xmax, ymin, ymax (, zmin, zmax) before the
    optional rigid rotation is applied.

    Args:
        extents: Box edge lengths (d values)
        subdivisions: Cells per axis (d values)
        origin: Lower corner (defaults to the coordinate origin)
        rotation_angle: Rigid rotation in degrees
        rotation_axis: Rotation axis (3D only)
        rotation_center: Fixed point of the rotation (defaults to origin)

    Returns:
        Mesh
    """
    extents = np.asarray(extents, dtype=float)
    subdivisions = np.asarray(subdivisions, dtype=int)
    dim = len(extents)
    if dim not in (2, 3) or len(subdivisions) != dim:
        raise ValueError("extents and subdivisions must both have 2 or 3 entries")
    if np.any(extents <= 0.0) or np.any(subdivisions < 1):
        raise ValueError("extents and subdivisions must be positive")
    origin = np.zeros(dim) if origin is None else np.asarray(origin, dtype=float)

    counts = subdivisions + 1
    axes = [np.linspace(0.0, extents[k], counts[k]) for k in range(dim)]
    grid = np.meshgrid(*axes, indexing="ij")
    # node id = i + nx1*(j + ny1*k): x index fastest
    nodes = np.column_stack([g.transpose().ravel() for g in grid]) + origin
    index = np.column_stack([
        g.transpose().ravel() for g in np.meshgrid(*[np.arange(c) for c in counts], indexing="ij")
    ])

    def node_id(*ijk: np.ndarray) -> np.ndarray:
        nid = ijk[0]
        stride = counts[0]
        for k in range(1, dim):
            nid = nid + stride * ijk[k]
            stride *= counts[k]
        return nid

    cells = np.meshgrid(*[np.arange(s) for s in subdivisions], indexing="ij")
    cells = [c.transpose().ravel() for c in cells]

    if dim == 2:
        i, j = cells
        n00, n10 = node_id(i, j), node_id(i + 1, j)
        n01, n11 = node_id(i, j + 1), node_id(i + 1, j + 1)
        elements = np.concatenate([
            np.column_stack([n00, n10, n11]),
            np.column_stack([n00, n11, n01]),
        ])
    else:
        i, j, k = cells
        corners = np.column_stack([
            node_id(i + a, j + b, k + c)
            for c in (0, 1) for b in (0, 1) for a in (0, 1)
        ])
        elements = corners[:, KUHN_TETRAHEDRA].reshape(-1, 4)
        elements = fix_orientation(nodes, elements)

    facets, _ = find_boundary_facets(elements)
    tags = np.empty(len(facets), dtype=object)
    for f, facet in enumerate(facets):
        ijk = index[facet]
        for axis in range(dim):
            if np.all(ijk[:, axis] == 0):
                tags[f] = BOX_FACE_TAGS[2 * axis]
                break
            if np.all(ijk[:, axis] == subdivisions[axis]):
                tags[f] = BOX_FACE_TAGS[2 * axis + 1]
                break

    if rotation_angle:
        center = origin if rotation_center is None else np.asarray(rotation_center, dtype=float)
        rot = rotation_matrix(dim, rotation_angle, rotation_axis)
        nodes = (nodes - center) @ rot.T + center

    logger.debug(f"Box mesh {tuple(extents)} / {tuple(subdivisions)}: {len(nodes)} nodes, {len(elements)} elements")
    return Mesh(nodes.copy(), nodes.copy(), elements, facets, tags)


def element_geometry(mesh: Mesh, element_id: int) -> ElementGeometry:
    """
    Geometry of one element in the current configuration.

    Raises:
        InvertedElementError: if the element volume is not positive
    """
    element = mesh.elements[element_id:element_id + 1]
    try:
        return compute_geometry(mesh.nodes_current, element).element(0)
    except InvertedElementError as e:
        raise InvertedElementError(f"inverted element {element_id}", element_id) from e


def jacobian_to_reference(mesh: Mesh, element_id: int) -> float:
    """J = current volume / reference volume of one element."""
    element = mesh.elements[element_id:element_id + 1]
    current = signed_volumes(mesh.nodes_current, element)[0]
    reference = signed_volumes(mesh.nodes_reference, element)[0]
    return float(current / reference)


def element_jacobians(mesh: Mesh) -> np.ndarray:
    """J of every element."""
    return mesh.volumes() / mesh.volumes(reference=True)


def move_mesh(mesh: Mesh, delta_u: np.ndarray) -> Mesh:
    """
    Relocate the nodes by a displacement increment.

    Args:
        mesh: Mesh in configuration x^n
        delta_u: (N, d) nodal displacement increment

    Returns:
        New Mesh at x^n + delta_u (reference coordinates untouched)

    Raises:
        MeshInversionError: if any element volume becomes non-positive
    """
    delta_u = np.asarray(delta_u, dtype=float)
    if delta_u.shape != mesh.nodes_current.shape:
        raise ValueError(f"delta_u shape {delta_u.shape} != {mesh.nodes_current.shape}")

    nodes = mesh.nodes_current + delta_u
    volumes = signed_volumes(nodes, mesh.elements)
    bad = np.flatnonzero(volumes <= 0.0)
    if bad.size:
        element_id = int(bad[np.argmin(volumes[bad])])
        raise MeshInversionError(element_id, float(volumes[element_id]))
    return replace(mesh, nodes_current=nodes)


def perturb_interior_nodes(mesh: Mesh, amplitude: float, seed: int = 0) -> Mesh:
    """
    Jitter interior nodes to build an unstructured mesh from a structured one.

    Both configurations receive the perturbation; boundary nodes stay put.
    """
    rng = np.random.default_rng(seed)
    nodes = mesh.nodes_reference.copy()
    interior = np.setdiff1d(np.arange(mesh.n_nodes), mesh.boundary_nodes())
    nodes[interior] += rng.uniform(-amplitude, amplitude, size=(len(interior), mesh.dim))
    compute_geometry(nodes, mesh.elements)
    return replace(mesh, nodes_current=nodes.copy(), nodes_reference=nodes)
