"""
Solver - Newton iteration, implicit time steps and the sparse linear solve.

One step of the updated Lagrangian scheme:
1. Predictor: u^n with the Dirichlet values of t^{n+1}
2. Newton on the stabilized mixed residual until
   ||r_k|| <= max(tol * ||r_0||, 1e-14) (constrained rows excluded)
3. Move the mesh by u^{n+1} - u^n, update rho = rho0 / J, rotate history
"""

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.sparse.linalg import LinearOperator, MatrixRankWarning, gmres, spilu, spsolve

from vms_solid.errors import ConvergenceError, LinearSolverError
from vms_solid.fem import (
    BoundaryCondition,
    DofMap,
    LinearSystem,
    apply_dirichlet,
    assemble_transient,
    assembly_frame,
    constraint_defect,
    dirichlet_constraints,
    free_residual_norm,
)
from vms_solid.materials import Material, incremental_stretch_defect, update_density
from vms_solid.mesh import Mesh, element_jacobians, move_mesh
from vms_solid.timestepping import SCHEMES, STATIC, State, effective_scheme
from vms_solid.vms import StabilizationParams, tau_field

logger = logging.getLogger(__name__)

DIRECT = "direct"
ITERATIVE = "iterative"
LINEAR_SOLVERS = (DIRECT, ITERATIVE)

ABSOLUTE_TOLERANCE = 1e-14
STRETCH_DEFECT_WARNING = 0.05


@dataclass(frozen=True)
class LinearSolverConfig:
    """Direct sparse LU, or restarted GMRES with an incomplete LU preconditioner."""
    kind: str = DIRECT
    tol: float = 1e-10
    max_iter: int = 200
    restart: int = 50
    drop_tol: float = 1e-5
    fill_factor: float = 20.0

    def __post_init__(self):
        if self.kind not in LINEAR_SOLVERS:
            raise ValueError(f"linear solver must be one of {LINEAR_SOLVERS}, got {self.kind}")
        if not 0.0 < self.tol < 1.0:
            raise ValueError(f"linear tolerance must be in (0, 1), got {self.tol}")
        if self.max_iter < 1 or self.restart < 1:
            raise ValueError("linear max_iter and restart must be positive")


@dataclass(frozen=True)
class SolverConfig:
    """Time scheme, step size and Newton/linear solver controls."""
    scheme: str
    dt: float
    newton_tol: float = 1e-8
    newton_max_iter: int = 25
    linear: LinearSolverConfig = field(default_factory=LinearSolverConfig)
    stabilization: StabilizationParams = field(default_factory=StabilizationParams)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme}")
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0.0 < self.newton_tol < 1.0:
            raise ValueError(f"newton tolerance must be in (0, 1), got {self.newton_tol}")
        if self.newton_max_iter < 1:
            raise ValueError("newton max_iter must be positive")

    @property
    def transient(self) -> bool:
        return self.scheme != STATIC


def solve_linear_system(
    system: LinearSystem, config: Union[SolverConfig, LinearSolverConfig, None] = None
) -> np.ndarray:
    """
    Solve a (Dirichlet-constrained) sparse system.

    Constrained entries of the result are set to their prescribed values
    exactly.

    Args:
        system: LinearSystem
        config: SolverConfig or LinearSolverConfig (direct solve when omitted)

    Returns:
        Solution vector

    Raises:
        LinearSolverError: singular matrix, or GMRES hit its iteration cap
    """
    if isinstance(config, SolverConfig):
        linear = config.linear
    else:
        linear = config or LinearSolverConfig()

    matrix = system.matrix.tocsc()
    rhs = np.asarray(system.rhs, dtype=float)

    if linear.kind == DIRECT:
        with warnings.catch_warnings():
            warnings.simplefilter("error", MatrixRankWarning)
            try:
                x = spsolve(matrix, rhs)
            except (MatrixRankWarning, RuntimeError) as e:
                raise LinearSolverError(f"singular matrix: {e}") from e
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not np.all(np.isfinite(x)):
            raise LinearSolverError("singular matrix: non-finite solution")
    else:
        try:
            ilu = spilu(matrix, drop_tol=linear.drop_tol, fill_factor=linear.fill_factor)
        except RuntimeError as e:
            raise LinearSolverError(f"singular matrix: incomplete factorization failed ({e})") from e
        preconditioner = LinearOperator(matrix.shape, matvec=ilu.solve)
        x, info = gmres(
            matrix,
            rhs,
            M=preconditioner,
            rtol=linear.tol,
            atol=0.0,
            restart=linear.restart,
            maxiter=linear.max_iter,
        )
        rhs_norm = np.linalg.norm(rhs)
        residual = float(np.linalg.norm(rhs - matrix @ x) / rhs_norm) if rhs_norm > 0.0 else 0.0
        logger.debug(f"GMRES info={info}, relative residual {residual:.3e}")
        if info != 0 or not np.all(np.isfinite(x)):
            raise LinearSolverError(
                f"GMRES stopped without converging (info={info}), relative residual {residual:.3e}",
                residual=residual,
            )

    for dof, value in system.dirichlet.items():
        x[dof] = value
    return x


def step_tau(mesh: Mesh, material: Material, state: State, config: SolverConfig) -> np.ndarray:
    """tau_K on the configuration the step is assembled on."""
    frame = assembly_frame(mesh, material)
    density = state.density if material.finite_strain else material.rho0
    return tau_field(
        frame, material.moduli.mu, density, config.dt, config.stabilization, transient=config.transient
    )


def _linearize(
    mesh: Mesh,
    material: Material,
    state: State,
    config: SolverConfig,
    bcs: Sequence[BoundaryCondition],
    tau: np.ndarray,
    constraints: Dict[int, float],
) -> Tuple[LinearSystem, float]:
    system = assemble_transient(mesh, material, state, config.dt, config.scheme, bcs, tau)
    return system, free_residual_norm(system.rhs, constraints.keys())


def _solve_increment(
    system: LinearSystem, constraints: Dict[int, float], config: SolverConfig, dofmap: DofMap
) -> Tuple[np.ndarray, np.ndarray]:
    constrained = apply_dirichlet(system, {dof: 0.0 for dof in constraints})
    x = solve_linear_system(constrained, config)
    delta_u, delta_p = dofmap.split(x)
    return delta_u.copy(), delta_p.copy()


def newton_step(
    mesh: Mesh,
    material: Material,
    state: State,
    config: SolverConfig,
    bcs: Sequence[BoundaryCondition],
    tau: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    One Newton update at the iterate held by ``state``.

    The iterate must already carry the Dirichlet values of state.t; the
    increment is zero on constrained dofs.

    Returns:
        (delta_u (N, d), delta_p (N,), residual norm before the update)
    """
    tau = step_tau(mesh, material, state, config) if tau is None else tau
    dofmap = DofMap(mesh.n_nodes, mesh.dim)
    constraints = dirichlet_constraints(mesh, bcs, state.t, dofmap)
    system, residual_norm = _linearize(mesh, material, state, config, bcs, tau, constraints)
    delta_u, delta_p = _solve_increment(system, constraints, config, dofmap)
    return delta_u, delta_p, residual_norm


def _stretch_defect(mesh: Mesh, state: State, delta_u: np.ndarray) -> float:
    gradients = mesh.geometry().shape_gradients
    grad_u = np.einsum("eai,eaj->eij", state.u_n[mesh.elements], gradients)
    grad_du = np.einsum("eai,eaj->eij", delta_u[mesh.elements], gradients)
    return float(np.max(incremental_stretch_defect(grad_u, grad_du)))


def advance_step(
    mesh: Mesh,
    material: Material,
    state: State,
    config: SolverConfig,
    bcs: Sequence[BoundaryCondition],
) -> Tuple[Mesh, State]:
    """
    Take one time (or load) step.

    Args:
        mesh: Mesh at x^n
        material: Constitutive model
        state: Converged state at t^n
        config: Solver configuration
        bcs: Boundary conditions

    Returns:
        (mesh at x^{n+1}, state at t^{n+1})

    Raises:
        ConvergenceError: Newton did not converge (carries the residual trace)
        MeshInversionError: the converged increment inverts an element
    """
    scheme = effective_scheme(config.scheme, state.levels)
    if scheme != config.scheme:
        logger.info(f"Step {state.step + 1}: {config.scheme} lacks history, using {scheme}")
        config = replace(config, scheme=scheme)

    t_new = state.t + config.dt
    dofmap = DofMap(mesh.n_nodes, mesh.dim)
    constraints = dirichlet_constraints(mesh, bcs, t_new, dofmap)
    trial = state.trial(t_new)
    if constraints:
        np.put(trial.u, list(constraints.keys()), list(constraints.values()))

    tau = step_tau(mesh, material, state, config)
    warn_at = max(1, int(0.8 * config.newton_max_iter))
    trace = []
    reference_norm = None
    for iteration in range(config.newton_max_iter + 1):
        system, residual_norm = _linearize(mesh, material, trial, config, bcs, tau, constraints)
        trace.append(residual_norm)
        logger.debug(f"Newton {iteration}: residual {residual_norm:.6e}")

        if not np.isfinite(residual_norm):
            raise ConvergenceError(f"Newton residual is not finite at t={t_new:.6g}", trace)
        if reference_norm is None:
            reference_norm = residual_norm
        if residual_norm <= max(config.newton_tol * reference_norm, ABSOLUTE_TOLERANCE):
            break
        if iteration == config.newton_max_iter:
            raise ConvergenceError(
                f"Newton did not converge in {config.newton_max_iter} iterations at t={t_new:.6g}: "
                f"residual {residual_norm:.3e}",
                trace,
            )
        if iteration == warn_at:
            logger.warning(f"Newton reached {iteration} of {config.newton_max_iter} iterations at t={t_new:.6g}")

        delta_u, delta_p = _solve_increment(system, constraints, config, dofmap)
        trial.u = trial.u + delta_u
        trial.p = trial.p + delta_p

    step_increment = trial.u - state.u_n
    defect = 0.0
    volumetric_defect = None
    if material.finite_strain:
        defect = _stretch_defect(mesh, state, step_increment)
        if defect > STRETCH_DEFECT_WARNING:
            logger.warning(f"Step {state.step + 1}: incremental stretch defect {defect:.3f}")
        volumetric_defect = constraint_defect(
            mesh.geometry(), mesh.elements, step_increment, trial.p - state.p_n, material.moduli.inv_K
        )
        if state.volumetric_defect is not None:
            volumetric_defect = volumetric_defect + state.volumetric_defect

    new_mesh = move_mesh(mesh, step_increment)
    density = update_density(material.rho0, element_jacobians(new_mesh))
    new_state = state.advanced(trial.u, trial.p, t_new, density, trace, defect, volumetric_defect)
    logger.info(
        f"Step {new_state.step}: t={t_new:.6g}, scheme={scheme}, "
        f"newton_iterations={len(trace) - 1}, residual={trace[-1]:.3e}"
    )
    return new_mesh, new_state
