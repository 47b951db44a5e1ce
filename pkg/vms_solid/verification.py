"""
Verification - Method checks run by ``vms_solid verify`` and the test suite.

Checks:
- patch tests (2D/3D, perturbed meshes, linear displacement field)
- finite-difference check of the hyperelastic element tangent
- temporal order of BDF1/BDF2 on a rigid body under a ramped body force
- h^2 scaling of the static tau
- pressure checkerboard with and without stabilization
- manufactured-solution L2 convergence of small-strain elasticity
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from vms_solid.cases.diagnostics import error_orders, pressure_oscillation_indicator
from vms_solid.fem import (
    BodyForce,
    BoundaryCondition,
    DirichletBC,
    DofMap,
    apply_dirichlet,
    assemble_steady_linear,
    dirichlet_constraints,
    element_internal_force,
    quadrature_rule,
)
from vms_solid.materials import LINEAR_ELASTIC, NEO_HOOKEAN, Material
from vms_solid.mesh import (
    BOX_FACE_TAGS,
    Mesh,
    compute_geometry,
    generate_box_mesh,
    perturb_interior_nodes,
)
from vms_solid.solver import SolverConfig, advance_step, solve_linear_system
from vms_solid.timestepping import BDF1, BDF2, State
from vms_solid.vms import StabilizationParams, compute_tau, tau_field

logger = logging.getLogger(__name__)

PATCH_TOLERANCE = 1e-10
TANGENT_TOLERANCE = 1e-5
BDF_MIN_ORDERS = {BDF1: 0.9, BDF2: 1.8}
CHECKERBOARD_RATIO = 0.1
MMS_MIN_ORDERS = {"displacement": 1.9, "pressure": 0.9}


@dataclass
class VerificationResult:
    """One row of the verification table."""
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def row(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name:<18} {status:<4}  value={self.value:.3e}  threshold={self.threshold:.3e}  {self.detail}"


def solve_static(
    mesh: Mesh,
    material: Material,
    bcs: Sequence[BoundaryCondition],
    params: Optional[StabilizationParams] = None,
    constraints: Optional[Dict[int, float]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Single stabilized static solve of small-strain elasticity.

    Args:
        mesh: Mesh
        material: linear_elastic material
        bcs: Loads and Dirichlet conditions
        params: Stabilization (alpha = 1 by default)
        constraints: Extra {dof: value} prescriptions

    Returns:
        (U (N, d), P (N,))
    """
    params = params or StabilizationParams()
    tau = tau_field(mesh.geometry(reference=True), material.moduli.mu, material.rho0, None, params, transient=False)
    system = assemble_steady_linear(mesh, material, bcs, tau)
    dofmap = DofMap(mesh.n_nodes, mesh.dim)
    prescribed = dirichlet_constraints(mesh, bcs, None, dofmap)
    prescribed.update(constraints or {})
    x = solve_linear_system(apply_dirichlet(system, prescribed))
    U, P = dofmap.split(x)
    return U.copy(), P.copy()


# Patch test

def patch_test(dim: int = 2, seed: int = 0, nu: float = 0.3) -> float:
    """
    Relative nodal error of a linear displacement field on a perturbed mesh.

    The whole boundary carries u = A x + b; the interior must reproduce it
    together with the constant pressure K tr(A).
    """
    subdivisions = (4, 4) if dim == 2 else (2, 2, 2)
    mesh = generate_box_mesh((1.0,) * dim, subdivisions)
    mesh = perturb_interior_nodes(mesh, amplitude=0.15 / max(subdivisions), seed=seed)
    material = Material.from_constants(LINEAR_ELASTIC, 1.0, nu, 1.0)

    rng = np.random.default_rng(seed)
    A = 1e-2 * rng.standard_normal((dim, dim))
    b = 1e-2 * rng.standard_normal(dim)
    exact = mesh.nodes_reference @ A.T + b

    dofmap = DofMap(mesh.n_nodes, dim)
    boundary = mesh.boundary_nodes()
    constraints = {
        int(dofmap.u_dof(node, axis)): float(exact[node, axis])
        for node in boundary.tolist()
        for axis in range(dim)
    }
    U, P = solve_static(mesh, material, [], constraints=constraints)

    displacement_error = np.abs(U - exact).max() / np.abs(exact).max()
    pressure = material.moduli.K * np.trace(A)
    pressure_error = np.abs(P - pressure).max() / abs(pressure)
    return float(max(displacement_error, pressure_error))


# Hyperelastic tangent

def _random_deformation(rng: np.random.Generator, J_range: Tuple[float, float]) -> np.ndarray:
    while True:
        F = np.eye(3) + 0.2 * rng.standard_normal((3, 3))
        det = np.linalg.det(F)
        if det > 0.1:
            return F * (rng.uniform(*J_range) / det) ** (1.0 / 3.0)


def tangent_error(
    material: Material,
    F: np.ndarray,
    pressure: np.ndarray,
    step: float = 1e-6,
) -> float:
    """
    Max-entry relative error between the analytic element tangent of one
    tetrahedron and central differences of its internal force.
    """
    nodes = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    elements = np.array([[0, 1, 2, 3]])
    reference = compute_geometry(nodes, elements)
    U_e = (nodes @ (F - np.eye(3)).T)[None]
    P_e = np.asarray(pressure, dtype=float)[None]

    _, K_uu, K_up = element_internal_force(material, reference, U_e, P_e)
    fd_uu = np.zeros_like(K_uu)
    fd_up = np.zeros_like(K_up)
    for a in range(4):
        for j in range(3):
            plus, minus = U_e.copy(), U_e.copy()
            plus[0, a, j] += step
            minus[0, a, j] -= step
            f_plus = element_internal_force(material, reference, plus, P_e)[0]
            f_minus = element_internal_force(material, reference, minus, P_e)[0]
            fd_uu[0, :, :, a, j] = (f_plus - f_minus)[0] / (2.0 * step)
        plus, minus = P_e.copy(), P_e.copy()
        plus[0, a] += step
        minus[0, a] -= step
        f_plus = element_internal_force(material, reference, U_e, plus)[0]
        f_minus = element_internal_force(material, reference, U_e, minus)[0]
        fd_up[0, :, :, a] = (f_plus - f_minus)[0] / (2.0 * step)

    scale = max(np.abs(fd_uu).max(), np.abs(fd_up).max())
    return float(max(np.abs(K_uu - fd_uu).max(), np.abs(K_up - fd_up).max()) / scale)


def tangent_check(kind: str = NEO_HOOKEAN, n_states: int = 5, seed: int = 0) -> float:
    """Worst tangent_error over random states with J in [0.7, 1.5]."""
    material = Material.from_constants(kind, 1.0, 0.45, 1.0)
    rng = np.random.default_rng(seed)
    errors = []
    for _ in range(n_states):
        F = _random_deformation(rng, (0.7, 1.5))
        errors.append(tangent_error(material, F, 0.1 * rng.standard_normal(4)))
    return max(errors)


# Temporal order

def free_fall_displacement(scheme: str, dt: float, t_end: float = 1.0, g: float = 2.0) -> float:
    """
    Vertical displacement at t_end of a free body under a body force
    ramped linearly from 0 to g over [0, t_end]; exact value -g t_end^2 / 6.
    """
    mesh = generate_box_mesh((1.0, 1.0), (2, 2))
    material = Material.from_constants(LINEAR_ELASTIC, 1.0, 0.3, 1.0)
    bcs = [BodyForce(value=(0.0, -g), ramp="linear", ramp_time=t_end, name="gravity")]
    config = SolverConfig(scheme=scheme, dt=dt)
    state = State.initial(mesh.n_nodes, mesh.dim, density=np.full(mesh.n_elements, material.rho0))
    for _ in range(int(round(t_end / dt))):
        mesh, state = advance_step(mesh, material, state, config, bcs)
    return float(state.u[:, 1].mean())


def bdf_order(scheme: str, dts: Sequence[float] = (0.1, 0.05, 0.025, 0.0125), t_end: float = 1.0) -> List[float]:
    """Observed orders of the free-fall error over the time steps dts."""
    g = 2.0
    exact = -g * t_end ** 2 / 6.0
    errors = [abs(free_fall_displacement(scheme, dt, t_end, g) - exact) for dt in dts]
    logger.debug(f"{scheme} free-fall errors: {errors}")
    return error_orders(errors, dts)


# Tau scaling

def tau_scaling(h: float = 0.1, mu: float = 500.0) -> float:
    """tau(h) / tau(h / 2); 4 for the static h^2 law."""
    return compute_tau(h, mu) / compute_tau(h / 2.0, mu)


# Checkerboard

def checkerboard_thetas(n: int = 16, nu: float = 0.49995) -> Tuple[float, float]:
    """
    Pressure oscillation indicator of the static Cook membrane with and
    without stabilization.

    Returns:
        (theta stabilized, theta unstabilized)
    """
    from vms_solid.cases.config import build_boundary_conditions, build_material, build_mesh
    from vms_solid.cases.presets import preset

    config = preset("cook_static").merged({"mesh.n": n, "material.nu": nu})
    mesh = build_mesh(config)
    material = build_material(config)
    bcs = build_boundary_conditions(config, mesh)

    thetas = []
    for alpha in (1.0, 0.0):
        _, P = solve_static(mesh, material, bcs, StabilizationParams(alpha=alpha))
        thetas.append(pressure_oscillation_indicator(mesh, P))
    return thetas[0], thetas[1]


# Manufactured solution

@dataclass(frozen=True)
class ManufacturedSolution:
    """Smooth plane-strain solution u = (sin pi x sin pi y, 0) on the unit square."""
    material: Material

    def displacement(self, x: np.ndarray) -> np.ndarray:
        u = np.zeros_like(x)
        u[:, 0] = np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
        return u

    def pressure(self, x: np.ndarray) -> np.ndarray:
        return self.material.moduli.K * np.pi * np.cos(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])

    def force(self, x: np.ndarray) -> np.ndarray:
        lam, mu = self.material.moduli.lam, self.material.moduli.mu
        f = np.empty_like(x)
        f[:, 0] = (lam + 3.0 * mu) * np.pi ** 2 * np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])
        f[:, 1] = -(lam + mu) * np.pi ** 2 * np.cos(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1])
        return f


def l2_error(mesh: Mesh, nodal: np.ndarray, exact: Callable[[np.ndarray], np.ndarray]) -> float:
    """L2 norm of (P1 interpolant of nodal values) - exact on the reference mesh."""
    points, weights = quadrature_rule(mesh.dim, 4 if mesh.dim == 2 else 2)
    volumes = mesh.volumes(reference=True)
    x = np.einsum("qa,ead->eqd", points, mesh.nodes_reference[mesh.elements])
    values = np.asarray(nodal, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    approx = np.einsum("qa,eac->eqc", points, values[mesh.elements])
    target = np.asarray(exact(x.reshape(-1, mesh.dim))).reshape(approx.shape)
    squared = np.einsum("e,q,eqc->", volumes, weights, (approx - target) ** 2)
    return float(math.sqrt(squared))


def manufactured_errors(n: int, nu: float = 0.3, alpha: float = 1.0) -> Tuple[float, float]:
    """
    Displacement and pressure L2 errors of the stabilized solution on an
    n x n mesh of the unit square.
    """
    material = Material.from_constants(LINEAR_ELASTIC, 1.0, nu, 1.0)
    solution = ManufacturedSolution(material)
    mesh = generate_box_mesh((1.0, 1.0), (n, n))
    bcs: List[BoundaryCondition] = [
        DirichletBC(tag=tag, value=(0.0, 0.0), name=tag) for tag in BOX_FACE_TAGS[:4]
    ]
    bcs.append(BodyForce(gravity=False, density_field=solution.force, name="manufactured"))
    U, P = solve_static(mesh, material, bcs, StabilizationParams(alpha=alpha))
    return l2_error(mesh, U, solution.displacement), l2_error(mesh, P, solution.pressure)


def manufactured_orders(densities: Sequence[int] = (4, 8, 16, 32)) -> Dict[str, List[float]]:
    """Observed L2 orders of displacement and pressure under mesh refinement."""
    errors = [manufactured_errors(n) for n in densities]
    sizes = [1.0 / n for n in densities]
    return {
        "displacement": error_orders([e[0] for e in errors], sizes),
        "pressure": error_orders([e[1] for e in errors], sizes),
    }


def run_verification(quick: bool = False) -> List[VerificationResult]:
    """
    Run every check and collect a PASS/FAIL row per check.

    Args:
        quick: Skip the checkerboard and manufactured-solution studies
    """
    results: List[VerificationResult] = []

    for dim in (2, 3):
        error = patch_test(dim)
        results.append(VerificationResult(f"patch_{dim}d", error <= PATCH_TOLERANCE, error, PATCH_TOLERANCE))

    error = tangent_check(NEO_HOOKEAN)
    results.append(VerificationResult("tangent_nh", error <= TANGENT_TOLERANCE, error, TANGENT_TOLERANCE))

    for scheme, minimum in BDF_MIN_ORDERS.items():
        order = min(bdf_order(scheme))
        results.append(VerificationResult(f"{scheme}_order", order >= minimum, order, minimum))

    ratio = tau_scaling()
    results.append(VerificationResult("tau_scaling", abs(ratio - 4.0) <= 1e-12, ratio, 4.0))

    if not quick:
        stabilized, unstabilized = checkerboard_thetas()
        ratio = stabilized / unstabilized
        results.append(VerificationResult(
            "checkerboard",
            ratio <= CHECKERBOARD_RATIO,
            ratio,
            CHECKERBOARD_RATIO,
            f"theta {stabilized:.3e} vs {unstabilized:.3e}",
        ))
        orders = manufactured_orders()
        for name, minimum in MMS_MIN_ORDERS.items():
            worst = min(orders[name])
            results.append(VerificationResult(f"mms_{name}", worst >= minimum, worst, minimum))

    for result in results:
        logger.info(f"Verification {result.row()}")
    return results
