"""
FEM - P1/P1 mixed displacement-pressure discretization.

This module provides:
- DofMap: displacement dofs node*d + axis, pressure dofs N*d + node
- Boundary conditions (Dirichlet, traction, body force) with time ramps
- Exact quadrature on simplices
- Element kernels vectorized over all elements
- Global assembly of the residual and its Newton tangent (COO -> CSR)
- Dirichlet row/column elimination

Sign convention: sigma = p I + dev sigma with p = K div u, so the momentum
row carries +(p, div w) and the pressure row reads
(div u, q) - (1/K)(p, q) - sum_K tau_K (R(u_h), grad q), R = grad p + f - rho u_tt.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix, diags

from vms_solid.errors import AssemblyError, DirichletConflictError
from vms_solid.materials import (
    LINEAR_ELASTIC,
    Material,
    deviatoric_piola,
    embed,
    pressure_piola,
)
from vms_solid.mesh import Mesh, MeshGeometry
from vms_solid.timestepping import bdf_acceleration, bdf_leading_coefficient
from vms_solid.vms import fine_scale_pressure_terms

logger = logging.getLogger(__name__)

RAMP_CONSTANT = "constant"
RAMP_LINEAR = "linear"
RAMPS = (RAMP_CONSTANT, RAMP_LINEAR)

STATIC = "static"

# Barycentric points and weights (fractions of the element volume).
QUADRATURE = {
    (2, 1): ([[1 / 3, 1 / 3, 1 / 3]], [1.0]),
    (2, 2): (
        [[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]],
        [1 / 3, 1 / 3, 1 / 3],
    ),
    (2, 4): (
        [
            [0.108103018168070, 0.445948490915965, 0.445948490915965],
            [0.445948490915965, 0.108103018168070, 0.445948490915965],
            [0.445948490915965, 0.445948490915965, 0.108103018168070],
            [0.816847572980459, 0.091576213509771, 0.091576213509771],
            [0.091576213509771, 0.816847572980459, 0.091576213509771],
            [0.091576213509771, 0.091576213509771, 0.816847572980459],
        ],
        [0.223381589678011] * 3 + [0.109951743655322] * 3,
    ),
    (3, 1): ([[0.25, 0.25, 0.25, 0.25]], [1.0]),
    (3, 2): (
        [
            [0.5854101966249685, 0.1381966011250105, 0.1381966011250105, 0.1381966011250105],
            [0.1381966011250105, 0.5854101966249685, 0.1381966011250105, 0.1381966011250105],
            [0.1381966011250105, 0.1381966011250105, 0.5854101966249685, 0.1381966011250105],
            [0.1381966011250105, 0.1381966011250105, 0.1381966011250105, 0.5854101966249685],
        ],
        [0.25, 0.25, 0.25, 0.25],
    ),
}


def quadrature_rule(dim: int, degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cheapest tabulated rule exact for polynomials of the given degree.

    Returns:
        (barycentric points (Q, d+1), weights (Q,) summing to 1)
    """
    available = sorted(deg for (d, deg) in QUADRATURE if d == dim)
    for candidate in available:
        if candidate >= degree:
            points, weights = QUADRATURE[(dim, candidate)]
            return np.array(points), np.array(weights)
    raise AssemblyError(f"No quadrature rule of degree {degree} in {dim}D")


@dataclass(frozen=True)
class DofMap:
    """Degree-of-freedom numbering for P1 displacement and P1 pressure."""
    n_nodes: int
    dim: int

    @property
    def n_u(self) -> int:
        return self.n_nodes * self.dim

    @property
    def total_dofs(self) -> int:
        return self.n_nodes * (self.dim + 1)

    def u_dof(self, node, axis):
        return node * self.dim + axis

    def p_dof(self, node):
        return self.n_u + node

    def element_dofs(self, elements: np.ndarray) -> np.ndarray:
        """(E, (d+1)(d+1)) dofs per element: u of node a axis i at a*d+i, then p."""
        u = (elements[:, :, None] * self.dim + np.arange(self.dim)).reshape(len(elements), -1)
        p = self.n_u + elements
        return np.concatenate([u, p], axis=1)

    def split(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Solution vector -> (U (N, d), P (N,))."""
        return x[:self.n_u].reshape(self.n_nodes, self.dim), x[self.n_u:]

    def join(self, U: np.ndarray, P: np.ndarray) -> np.ndarray:
        return np.concatenate([np.asarray(U, dtype=float).ravel(), np.asarray(P, dtype=float)])


@dataclass
class LinearSystem:
    """Sparse system with the Dirichlet values it was constrained with."""
    matrix: csr_matrix
    rhs: np.ndarray
    dirichlet: Dict[int, float] = field(default_factory=dict)


def ramp_factor(ramp: str, t: Optional[float], ramp_time: float) -> float:
    """Load multiplier at time t; t=None means the fully applied load."""
    if ramp == RAMP_CONSTANT or t is None:
        return 1.0
    if ramp == RAMP_LINEAR:
        return min(max(t / ramp_time, 0.0), 1.0)
    raise AssemblyError(f"Unknown ramp: {ramp}")


@dataclass(frozen=True)
class DirichletBC:
    """Prescribed nodal displacement on the nodes of a facet tag."""
    tag: str
    value: Tuple[float, ...]
    components: Optional[Tuple[int, ...]] = None
    ramp: str = RAMP_CONSTANT
    ramp_time: float = 1.0
    name: str = ""

    kind = "dirichlet"

    def axes(self, dim: int) -> Tuple[int, ...]:
        return tuple(range(dim)) if self.components is None else tuple(self.components)

    def values_at(self, t: Optional[float]) -> np.ndarray:
        return ramp_factor(self.ramp, t, self.ramp_time) * np.asarray(self.value, dtype=float)


@dataclass(frozen=True)
class TractionBC:
    """Dead-load surface traction (stress units) on a facet tag."""
    tag: str
    value: Tuple[float, ...]
    ramp: str = RAMP_CONSTANT
    ramp_time: float = 1.0
    name: str = ""

    kind = "traction"

    def values_at(self, t: Optional[float]) -> np.ndarray:
        return ramp_factor(self.ramp, t, self.ramp_time) * np.asarray(self.value, dtype=float)


@dataclass(frozen=True)
class BodyForce:
    """
    Volumetric load.

    With gravity=True ``value`` is an acceleration and the force density is
    rho * value; otherwise ``density_field(x) -> (Q, d)`` gives a force
    density, or ``value`` is a constant force density.
    """
    value: Tuple[float, ...] = ()
    gravity: bool = True
    density_field: Optional[Callable[[np.ndarray], np.ndarray]] = None
    ramp: str = RAMP_CONSTANT
    ramp_time: float = 1.0
    name: str = ""

    kind = "body_force"

    def factor(self, t: Optional[float]) -> float:
        return ramp_factor(self.ramp, t, self.ramp_time)

    def density_at(self, x: np.ndarray, t: Optional[float]) -> np.ndarray:
        """Force density per unit volume at points x (Q, d), non-gravity loads only."""
        if self.density_field is not None:
            return self.factor(t) * np.asarray(self.density_field(x), dtype=float)
        return np.broadcast_to(self.factor(t) * np.asarray(self.value, dtype=float), x.shape)


BoundaryCondition = Union[DirichletBC, TractionBC, BodyForce]


def validate_boundary_conditions(mesh: Mesh, bcs: Sequence[BoundaryCondition]) -> None:
    """
    Check tags and the per-axis disjointness of Dirichlet and traction data.

    Raises:
        AssemblyError: unknown tag or wrong vector length
        DirichletConflictError: a traction acts on an axis that is also prescribed
    """
    tags = set(mesh.tags)
    dim = mesh.dim
    for bc in bcs:
        if isinstance(bc, (DirichletBC, TractionBC)):
            if bc.tag not in tags:
                raise AssemblyError(f"unknown tag: {bc.tag}")
            if len(bc.value) != dim:
                raise AssemblyError(f"{bc.kind} on '{bc.tag}' needs {dim} values, got {len(bc.value)}")
        elif bc.density_field is None and len(bc.value) != dim:
            raise AssemblyError(f"body force needs {dim} values, got {len(bc.value)}")

    for traction in (bc for bc in bcs if isinstance(bc, TractionBC)):
        for dirichlet in (bc for bc in bcs if isinstance(bc, DirichletBC)):
            if traction.tag != dirichlet.tag:
                continue
            for axis in dirichlet.axes(dim):
                if traction.value[axis] != 0.0:
                    raise DirichletConflictError(
                        f"tag '{traction.tag}' carries both a traction and a Dirichlet value on axis {axis}"
                    )


def dirichlet_constraints(
    mesh: Mesh, bcs: Sequence[BoundaryCondition], t: Optional[float], dofmap: Optional[DofMap] = None
) -> Dict[int, float]:
    """
    Constrained displacement dofs and their values at time t.

    Raises:
        AssemblyError: unknown tag
        DirichletConflictError: two different values on the same dof
    """
    dofmap = dofmap or DofMap(mesh.n_nodes, mesh.dim)
    constraints: Dict[int, float] = {}
    for bc in bcs:
        if not isinstance(bc, DirichletBC):
            continue
        nodes = mesh.nodes_with_tag(bc.tag)
        if nodes.size == 0:
            raise AssemblyError(f"unknown tag: {bc.tag}")
        values = bc.values_at(t)
        for axis in bc.axes(mesh.dim):
            for dof in dofmap.u_dof(nodes, axis).tolist():
                value = float(values[axis])
                if dof in constraints and constraints[dof] != value:
                    raise DirichletConflictError(
                        f"dof {dof} prescribed as {constraints[dof]} and {value}"
                    )
                constraints[dof] = value
    return constraints


def apply_dirichlet(system: LinearSystem, constraints) -> LinearSystem:
    """
    Impose prescribed dof values by row and column elimination.

    Constrained rows and columns are zeroed, the diagonal set to 1 and the
    rhs to the target value; known values move to the rhs of free rows.

    Args:
        system: Unconstrained system
        constraints: {dof: value} mapping or iterable of (dof, value) pairs

    Returns:
        New LinearSystem

    Raises:
        DirichletConflictError: the same dof given two different values
        AssemblyError: dof outside the system
    """
    if isinstance(constraints, dict):
        pairs = list(constraints.items())
    else:
        pairs = list(constraints)

    values: Dict[int, float] = {}
    for dof, value in pairs:
        dof, value = int(dof), float(value)
        if dof in values and values[dof] != value:
            raise DirichletConflictError(f"dof {dof} prescribed as {values[dof]} and {value}")
        values[dof] = value
    if not values:
        return system

    size = system.matrix.shape[0]
    dofs = np.fromiter(values.keys(), dtype=np.int64, count=len(values))
    if dofs.min() < 0 or dofs.max() >= size:
        raise AssemblyError(f"constrained dof outside [0, {size})")

    known = np.zeros(size)
    known[dofs] = np.fromiter(values.values(), dtype=float, count=len(values))
    free = np.ones(size)
    free[dofs] = 0.0

    rhs = (system.rhs - system.matrix @ known) * free + known
    keep = diags(free)
    matrix = (keep @ system.matrix @ keep + diags(1.0 - free)).tocsr()
    return LinearSystem(matrix=matrix, rhs=rhs, dirichlet={**system.dirichlet, **values})


def facet_measures(nodes: np.ndarray, facets: np.ndarray) -> np.ndarray:
    """Length (2D) or area (3D) of boundary facets."""
    x = nodes[facets]
    if nodes.shape[1] == 2:
        return np.linalg.norm(x[:, 1] - x[:, 0], axis=1)
    return 0.5 * np.linalg.norm(np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]), axis=1)


def integrate_traction(mesh: Mesh, tag: str, traction: Sequence[float]) -> np.ndarray:
    """
    Consistent P1 load of a constant traction on the reference boundary.

    Each facet hands t |facet| / d to each of its d nodes.

    Returns:
        (N, d) nodal forces

    Raises:
        AssemblyError: unknown tag
    """
    facets = mesh.facets_with_tag(tag)
    if facets.size == 0:
        raise AssemblyError(f"unknown tag: {tag}")
    traction = np.asarray(traction, dtype=float)
    share = facet_measures(mesh.nodes_reference, facets) / facets.shape[1]
    loads = np.zeros((mesh.n_nodes, mesh.dim))
    np.add.at(loads, facets, share[:, None, None] * traction)
    return loads


def p1_mass_matrix(volumes: np.ndarray, n_local: int) -> np.ndarray:
    """(E, n, n) exact P1 mass matrices V (1 + delta_ab) / (n (n + 1))."""
    pattern = (np.ones((n_local, n_local)) + np.eye(n_local)) / (n_local * (n_local + 1))
    return volumes[:, None, None] * pattern


def body_force_vector(mesh: Mesh, material: Material, load: BodyForce, t: Optional[float]) -> np.ndarray:
    """Galerkin load (f, v) on the reference configuration, (N, d)."""
    reference = mesh.geometry(reference=True)
    n_local = mesh.dim + 1
    nodal = np.zeros((mesh.n_nodes, mesh.dim))
    if load.gravity:
        force = material.rho0 * load.factor(t) * np.asarray(load.value, dtype=float)
        share = (reference.volumes / n_local)[:, None, None] * force
        np.add.at(nodal, mesh.elements, np.broadcast_to(share, (mesh.n_elements, n_local, mesh.dim)))
        return nodal

    points, weights = quadrature_rule(mesh.dim, 4 if mesh.dim == 2 else 2)
    x = np.einsum("qa,ead->eqd", points, mesh.nodes_reference[mesh.elements])
    density = load.density_at(x.reshape(-1, mesh.dim), t).reshape(x.shape)
    contribution = np.einsum("e,q,qa,eqd->ead", reference.volumes, weights, points, density)
    np.add.at(nodal, mesh.elements, contribution)
    return nodal


def external_force(mesh: Mesh, material: Material, bcs: Sequence[BoundaryCondition], t: Optional[float]) -> np.ndarray:
    """Sum of traction and body-force loads, (N, d)."""
    total = np.zeros((mesh.n_nodes, mesh.dim))
    for bc in bcs:
        if isinstance(bc, TractionBC):
            total += integrate_traction(mesh, bc.tag, bc.values_at(t))
        elif isinstance(bc, BodyForce):
            total += body_force_vector(mesh, material, bc, t)
    return total


def element_force_density(
    mesh: Mesh,
    frame_nodes: np.ndarray,
    density: np.ndarray,
    bcs: Sequence[BoundaryCondition],
    t: Optional[float],
) -> np.ndarray:
    """Element mean of the body force density f in the frame configuration, (E, d)."""
    force = np.zeros((mesh.n_elements, mesh.dim))
    for bc in bcs:
        if not isinstance(bc, BodyForce):
            continue
        if bc.gravity:
            force += density[:, None] * bc.factor(t) * np.asarray(bc.value, dtype=float)
            continue
        points, weights = quadrature_rule(mesh.dim, 2)
        x = np.einsum("qa,ead->eqd", points, frame_nodes[mesh.elements])
        values = bc.density_at(x.reshape(-1, mesh.dim), t).reshape(x.shape)
        force += np.einsum("q,eqd->ed", weights, values)
    return force


def linear_deviatoric_stiffness(geometry: MeshGeometry, mu: float) -> np.ndarray:
    """
    (E, n, d, n, d) element matrices of (2 mu dev[grad^s u], grad^s w).

    K[b, i, a, j] = mu V [delta_ij g_a.g_b + g_ai g_bj - 2/3 g_bi g_aj]
    """
    g = geometry.shape_gradients
    dim = g.shape[2]
    K = (
        np.einsum("ij,ebd,ead->ebiaj", np.eye(dim), g, g)
        + np.einsum("eai,ebj->ebiaj", g, g)
        - 2.0 / 3.0 * np.einsum("ebi,eaj->ebiaj", g, g)
    )
    return mu * geometry.volumes[:, None, None, None, None] * K


def pressure_coupling(geometry: MeshGeometry) -> np.ndarray:
    """(E, n, d, n) element matrices of (p, div w): V/(d+1) dN_b/dx_i for every pressure node."""
    g = geometry.shape_gradients
    n_local = g.shape[1]
    block = (geometry.volumes / n_local)[:, None, None] * g
    return np.broadcast_to(block[:, :, :, None], g.shape + (n_local,)).copy()


def deformation_gradients(reference_gradients: np.ndarray, U_e: np.ndarray) -> np.ndarray:
    """F = I + grad_X u per element, (E, d, d)."""
    dim = reference_gradients.shape[2]
    return np.eye(dim) + np.einsum("eai,eaj->eij", U_e, reference_gradients)


def element_internal_force(
    material: Material,
    reference: MeshGeometry,
    U_e: np.ndarray,
    P_e: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Internal force of the momentum row and its derivatives.

    Args:
        material: Constitutive model
        reference: Element geometry on the reference configuration
        U_e: (E, n, d) total nodal displacements
        P_e: (E, n) nodal pressures

    Returns:
        (f (E, n, d), K_uu (E, n, d, n, d), K_up (E, n, d, n))
    """
    g = reference.shape_gradients
    volumes = reference.volumes
    n_elements, n_local, dim = g.shape

    if material.kind == LINEAR_ELASTIC:
        K_uu = linear_deviatoric_stiffness(reference, material.moduli.mu)
        K_up = pressure_coupling(reference)
        f = np.einsum("ebiaj,eaj->ebi", K_uu, U_e) + np.einsum("ebia,ea->ebi", K_up, P_e)
        return f, K_uu, K_up

    F = embed(deformation_gradients(g, U_e), 1.0)
    P_dev, A_dev = deviatoric_piola(material, F)
    Q, dQ = pressure_piola(F)
    p_mean = P_e.mean(axis=1)

    stress = P_dev[:, :dim, :dim] + p_mean[:, None, None] * Q[:, :dim, :dim]
    tangent = A_dev[:, :dim, :dim, :dim, :dim] + p_mean[:, None, None, None, None] * dQ[:, :dim, :dim, :dim, :dim]

    f = volumes[:, None, None] * np.einsum("eij,ebj->ebi", stress, g)
    K_uu = volumes[:, None, None, None, None] * np.einsum("eijkl,ebj,eal->ebiak", tangent, g, g)
    coupling = (volumes / n_local)[:, None, None] * np.einsum("eij,ebj->ebi", Q[:, :dim, :dim], g)
    K_up = np.broadcast_to(coupling[:, :, :, None], (n_elements, n_local, dim, n_local)).copy()
    return f, K_uu, K_up


def _scatter_matrix(
    dofs: np.ndarray,
    K_uu: np.ndarray,
    K_up: np.ndarray,
    K_pu: np.ndarray,
    K_pp: np.ndarray,
    size: int,
) -> csr_matrix:
    n_elements, n_local = K_pp.shape[:2]
    nd = K_uu.shape[1] * K_uu.shape[2]
    m = nd + n_local
    blocks = np.empty((n_elements, m, m))
    blocks[:, :nd, :nd] = K_uu.reshape(n_elements, nd, nd)
    blocks[:, :nd, nd:] = K_up.reshape(n_elements, nd, n_local)
    blocks[:, nd:, :nd] = K_pu.reshape(n_elements, n_local, nd)
    blocks[:, nd:, nd:] = K_pp
    rows = np.repeat(dofs, m, axis=1)
    cols = np.tile(dofs, (1, m))
    # duplicates are summed in element order by the COO -> CSR conversion
    return coo_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(size, size)).tocsr()


def _scatter_vector(dofs: np.ndarray, r_u: np.ndarray, r_p: np.ndarray, size: int) -> np.ndarray:
    local = np.concatenate([r_u.reshape(len(r_u), -1), r_p], axis=1)
    return np.bincount(dofs.ravel(), weights=local.ravel(), minlength=size)


def assemble_residual(
    mesh: Mesh,
    material: Material,
    bcs: Sequence[BoundaryCondition],
    tau: np.ndarray,
    U: np.ndarray,
    P: np.ndarray,
    t: Optional[float] = None,
    frame: Optional[MeshGeometry] = None,
    frame_nodes: Optional[np.ndarray] = None,
    base_u: Optional[np.ndarray] = None,
    base_p: Optional[np.ndarray] = None,
    base_defect: Optional[np.ndarray] = None,
    density: Optional[np.ndarray] = None,
    acceleration: Optional[np.ndarray] = None,
    inertia_coefficient: float = 0.0,
    divergence_terms: bool = False,
) -> Tuple[csr_matrix, np.ndarray]:
    """
    Residual of the stabilized mixed equations and its tangent.

    Momentum rows hold f_int(U, P) + M u_tt + tau_div terms - f_ext, the
    pressure rows the stabilized constraint. Both use one code path, so a
    linear problem satisfies residual(U) = K U - b.

    Args:
        mesh: Mesh
        material: Constitutive model
        bcs: Loads and constraints (only loads enter the residual)
        tau: (E,) tau_K on the frame configuration
        U, P: Trial displacement (N, d) and pressure (N,)
        t: Load time (None for the fully applied load)
        frame: Geometry of the configuration the pressure equation lives on
        frame_nodes: Node coordinates of that configuration
        base_u, base_p: Values the frame-configuration increments start from
        base_defect: (E,) constraint defect accumulated before base_u, base_p
        density: (E,) density on the frame configuration
        acceleration: (N, d) u_tt of the trial state, None for static steps
        inertia_coefficient: d u_tt / d U (stencil[0] / dt^2)
        divergence_terms: Add the transient divergence penalty

    Returns:
        (tangent CSR matrix, residual vector)
    """
    dim = mesh.dim
    n_local = dim + 1
    elements = mesh.elements
    dofmap = DofMap(mesh.n_nodes, dim)

    tau = np.asarray(tau, dtype=float)
    if tau.shape != (mesh.n_elements,):
        raise AssemblyError(f"tau field has shape {tau.shape}, expected ({mesh.n_elements},)")

    reference = mesh.geometry(reference=True)
    if frame is None:
        frame, frame_nodes = reference, mesh.nodes_reference
    base_u = np.zeros_like(U) if base_u is None else base_u
    base_p = np.zeros_like(P) if base_p is None else base_p
    if density is None:
        density = np.full(mesh.n_elements, material.rho0)

    U_e = U[elements]
    P_e = P[elements]
    f_u, K_uu, K_up = element_internal_force(material, reference, U_e, P_e)

    g = frame.shape_gradients
    inv_K = material.moduli.inv_K
    dU_e = (U - base_u)[elements]
    dP_e = (P - base_p)[elements]
    divergence = np.einsum("ebi,ebi->e", dU_e, g)
    frame_mass = p1_mass_matrix(frame.volumes, n_local)

    K_pu = np.transpose(pressure_coupling(frame), (0, 3, 1, 2))
    K_pp = -inv_K * frame_mass
    r_p = np.repeat((frame.volumes / n_local * divergence)[:, None], n_local, axis=1)
    r_p = r_p - inv_K * np.einsum("eab,eb->ea", frame_mass, dP_e)

    mean_acceleration = np.zeros((mesh.n_elements, dim))
    if acceleration is not None:
        mass = material.rho0 * p1_mass_matrix(reference.volumes, n_local)
        acc_e = acceleration[elements]
        f_u = f_u + np.einsum("eba,eai->ebi", mass, acc_e)
        K_uu = K_uu + inertia_coefficient * np.einsum("eba,ik->ebiak", mass, np.eye(dim))
        mean_acceleration = acc_e.mean(axis=1)

    force = element_force_density(mesh, frame_nodes, density, bcs, t)
    tau_div = tau if divergence_terms else None
    terms = fine_scale_pressure_terms(
        frame,
        tau,
        force=force - density[:, None] * mean_acceleration,
        rho=density,
        inertia_coefficient=inertia_coefficient if acceleration is not None else 0.0,
        tau_div=tau_div,
        inv_K=inv_K,
    )

    r_p = r_p - np.einsum("eab,eb->ea", terms.pressure_laplacian, P_e) - terms.force_projection
    K_pp = K_pp - terms.pressure_laplacian
    K_pu = K_pu + terms.inertia_coupling
    if tau_div is not None:
        f_u = (
            f_u
            + np.einsum("ebiaj,eaj->ebi", terms.divergence_penalty, dU_e)
            - np.einsum("ebia,ea->ebi", terms.pressure_divergence, dP_e)
        )
        if base_defect is not None:
            f_u = f_u + (tau_div * frame.volumes * base_defect)[:, None, None] * g
        K_uu = K_uu + terms.divergence_penalty
        K_up = K_up - terms.pressure_divergence

    dofs = dofmap.element_dofs(elements)
    residual = _scatter_vector(dofs, f_u, r_p, dofmap.total_dofs)
    residual[:dofmap.n_u] -= external_force(mesh, material, bcs, t).ravel()
    matrix = _scatter_matrix(dofs, K_uu, K_up, K_pu, K_pp, dofmap.total_dofs)
    return matrix, residual


def constraint_defect(
    frame: MeshGeometry, elements: np.ndarray, dU: np.ndarray, dP: np.ndarray, inv_K: float
) -> np.ndarray:
    """Element-wise div(dU) - mean(dP) / K on the frame configuration, (E,)."""
    divergence = np.einsum("ebi,ebi->e", dU[elements], frame.shape_gradients)
    return divergence - inv_K * dP[elements].mean(axis=1)


def assemble_steady_linear(
    mesh: Mesh,
    material: Material,
    bcs: Sequence[BoundaryCondition],
    tau_field: Optional[np.ndarray],
    t: Optional[float] = None,
) -> LinearSystem:
    """
    Stabilized static system of small-strain elasticity on the reference mesh.

    Dirichlet data is not applied; see apply_dirichlet.

    Raises:
        AssemblyError: missing tau or a finite-strain material
    """
    if material.kind != LINEAR_ELASTIC:
        raise AssemblyError(f"assemble_steady_linear needs a linear_elastic material, got {material.kind}")
    if tau_field is None:
        raise AssemblyError("missing tau field")

    zeros_u = np.zeros((mesh.n_nodes, mesh.dim))
    zeros_p = np.zeros(mesh.n_nodes)
    matrix, residual = assemble_residual(mesh, material, bcs, tau_field, zeros_u, zeros_p, t=t)
    logger.debug(f"Assembled steady system: {matrix.shape[0]} dofs, {matrix.nnz} nonzeros")
    return LinearSystem(matrix=matrix, rhs=-residual)


def assemble_transient(
    mesh: Mesh,
    material: Material,
    state,
    dt: float,
    scheme: str,
    bcs: Sequence[BoundaryCondition],
    tau_field: Optional[np.ndarray],
) -> LinearSystem:
    """
    Newton linearization of one implicit step at the trial state.

    The returned system solves for the increment (delta_u, delta_p): its
    matrix is the tangent and its rhs the negative residual. Loads are taken
    at state.t, the end-of-step time.

    Args:
        mesh: Mesh at the start of the step (x^n)
        material: Constitutive model
        state: Trial State (u, p at the current Newton iterate plus history)
        dt: Time step
        scheme: "static", "bdf1" or "bdf2"
        bcs: Boundary conditions
        tau_field: (E,) tau_K on the frame configuration

    Raises:
        AssemblyError: missing tau or history
        KinematicInversionError: non-positive J at the trial state
    """
    if tau_field is None:
        raise AssemblyError("missing tau field")

    transient = scheme != STATIC
    acceleration = bdf_acceleration(state, dt, scheme) if transient else None
    coefficient = bdf_leading_coefficient(scheme, dt) if transient else 0.0

    if material.finite_strain:
        frame = mesh.geometry()
        frame_nodes = mesh.nodes_current
        base_u, base_p, density = state.u_n, state.p_n, state.density
        base_defect = state.volumetric_defect
    else:
        frame = mesh.geometry(reference=True)
        frame_nodes = mesh.nodes_reference
        base_u = base_p = base_defect = None
        density = np.full(mesh.n_elements, material.rho0)

    matrix, residual = assemble_residual(
        mesh,
        material,
        bcs,
        tau_field,
        state.u,
        state.p,
        t=state.t,
        frame=frame,
        frame_nodes=frame_nodes,
        base_u=base_u,
        base_p=base_p,
        base_defect=base_defect,
        density=density,
        acceleration=acceleration,
        inertia_coefficient=coefficient,
        divergence_terms=transient,
    )
    return LinearSystem(matrix=matrix, rhs=-residual)


def assembly_frame(mesh: Mesh, material: Material) -> MeshGeometry:
    """Geometry the pressure equation and tau are evaluated on."""
    return mesh.geometry() if material.finite_strain else mesh.geometry(reference=True)


def free_residual_norm(residual: np.ndarray, constrained: Sequence[int]) -> float:
    """Euclidean norm of the residual without the constrained rows."""
    mask = np.ones(residual.shape[0], dtype=bool)
    mask[list(constrained)] = False
    return float(np.linalg.norm(residual[mask]))


def total_measure(mesh: Mesh, tag: str) -> float:
    """Reference length/area of a tagged boundary."""
    facets = mesh.facets_with_tag(tag)
    if facets.size == 0:
        raise AssemblyError(f"unknown tag: {tag}")
    return float(facet_measures(mesh.nodes_reference, facets).sum())
