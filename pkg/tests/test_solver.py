"""
Tests for time stepping, the linear solve and the Newton driver.
"""

import numpy as np
import pytest
from scipy.sparse import csr_matrix


def make_state(n_nodes=3, dim=2, levels=3):
    from vms_solid.timestepping import State

    rng = np.random.default_rng(7)
    state = State.initial(n_nodes, dim, np.ones(1))
    state.u = rng.standard_normal((n_nodes, dim))
    state.u_n = rng.standard_normal((n_nodes, dim))
    state.u_nm1 = rng.standard_normal((n_nodes, dim))
    state.u_nm2 = rng.standard_normal((n_nodes, dim))
    state.levels = levels
    return state


def clamped_block(material, traction=(0.0, 5.0)):
    from vms_solid.fem import DirichletBC, TractionBC
    from vms_solid.mesh import generate_box_mesh

    mesh = generate_box_mesh((1.0, 1.0), (4, 4))
    bcs = [DirichletBC("xmin", (0.0, 0.0)), TractionBC("xmax", traction)]
    return mesh, bcs


class TestBdf:
    """Test the BDF stencils."""

    def test_bdf1_stencil(self):
        """Test u_tt = (u - 2 u_n + u_nm1) / dt^2."""
        from vms_solid.timestepping import BDF1, bdf_acceleration

        state = make_state()
        expected = (state.u - 2.0 * state.u_n + state.u_nm1) / 0.01

        assert np.allclose(bdf_acceleration(state, 0.1, BDF1), expected)

    def test_bdf2_stencil(self):
        """Test u_tt = (2u - 5u_n + 4u_nm1 - u_nm2) / dt^2."""
        from vms_solid.timestepping import BDF2, bdf_acceleration

        state = make_state()
        expected = (2.0 * state.u - 5.0 * state.u_n + 4.0 * state.u_nm1 - state.u_nm2) / 0.25

        assert np.allclose(bdf_acceleration(state, 0.5, BDF2), expected)

    def test_exact_for_quadratics(self):
        """Test both stencils on u(t) = t^2, whose second derivative is 2."""
        from vms_solid.timestepping import BDF1, BDF2, bdf_acceleration

        dt = 0.1
        state = make_state(n_nodes=1, dim=1)
        state.u, state.u_n, state.u_nm1, state.u_nm2 = (np.array([[(k * dt) ** 2]]) for k in (3, 2, 1, 0))

        assert bdf_acceleration(state, dt, BDF1)[0, 0] == pytest.approx(2.0)
        assert bdf_acceleration(state, dt, BDF2)[0, 0] == pytest.approx(2.0)

    def test_insufficient_history(self):
        """Test that BDF2 with two levels raises AssemblyError."""
        from vms_solid.errors import AssemblyError
        from vms_solid.timestepping import BDF2, bdf_acceleration

        with pytest.raises(AssemblyError):
            bdf_acceleration(make_state(levels=2), 0.1, BDF2)

    def test_fallback(self):
        """Test the scheme actually used on the first steps."""
        from vms_solid.timestepping import BDF1, BDF2, STATIC, effective_scheme

        assert effective_scheme(BDF2, 2) == BDF1
        assert effective_scheme(BDF2, 3) == BDF2
        assert effective_scheme(BDF1, 2) == BDF1
        assert effective_scheme(STATIC, 0) == STATIC

    def test_leading_coefficient(self):
        """Test d u_tt / d u^{n+1}."""
        from vms_solid.timestepping import BDF1, BDF2, STATIC, bdf_leading_coefficient

        assert bdf_leading_coefficient(BDF1, 0.5) == pytest.approx(4.0)
        assert bdf_leading_coefficient(BDF2, 0.5) == pytest.approx(8.0)
        assert bdf_leading_coefficient(STATIC, 0.5) == 0.0


class TestState:
    """Test the solution state."""

    def test_velocity_seeding(self):
        """Test that the initial velocity is recovered by the first difference."""
        from vms_solid.timestepping import State

        velocity = np.array([[10.0, 0.0], [10.0, 0.0]])
        state = State.initial(2, 2, np.ones(1), velocity=velocity, dt=0.01)

        assert np.allclose(state.velocity(0.01), velocity)
        assert state.levels == 2

    def test_velocity_needs_dt(self):
        """Test that seeding a velocity without dt is rejected."""
        from vms_solid.timestepping import State

        with pytest.raises(ValueError):
            State.initial(2, 2, np.ones(1), velocity=np.zeros((2, 2)))

    def test_history_rotation(self):
        """Test that advancing shifts the levels."""
        from vms_solid.timestepping import State

        state = State.initial(2, 1, np.ones(1))
        first = state.advanced(np.full((2, 1), 1.0), np.zeros(2), 0.1, np.ones(1), [1.0, 0.0])
        second = first.advanced(np.full((2, 1), 2.0), np.zeros(2), 0.2, np.ones(1), [1.0, 0.0])

        assert second.u_n[0, 0] == 2.0
        assert second.u_nm1[0, 0] == 1.0
        assert second.u_nm2[0, 0] == 0.0
        assert second.levels == 3
        assert second.step == 2


class TestLinearSolve:
    """Test solve_linear_system."""

    def test_direct(self):
        """Test a 2x2 SPD system."""
        from vms_solid.fem import LinearSystem
        from vms_solid.solver import solve_linear_system

        system = LinearSystem(csr_matrix(np.array([[4.0, 1.0], [1.0, 3.0]])), np.array([1.0, 2.0]))

        assert np.allclose(solve_linear_system(system), [1.0 / 11.0, 7.0 / 11.0])

    def test_singular(self):
        """Test that a singular matrix raises LinearSolverError."""
        from vms_solid.errors import LinearSolverError
        from vms_solid.fem import LinearSystem
        from vms_solid.solver import solve_linear_system

        system = LinearSystem(csr_matrix(np.array([[1.0, 2.0], [2.0, 4.0]])), np.array([1.0, 0.0]))

        with pytest.raises(LinearSolverError):
            solve_linear_system(system)

    def test_iterative_matches_direct(self):
        """Test GMRES with ILU against the direct solve on Cook's membrane."""
        from vms_solid.fem import DirichletBC, TractionBC, apply_dirichlet, assemble_steady_linear, dirichlet_constraints
        from vms_solid.materials import LINEAR_ELASTIC, Material
        from vms_solid.mesh import generate_cook_mesh
        from vms_solid.solver import ITERATIVE, LinearSolverConfig, solve_linear_system
        from vms_solid.vms import StabilizationParams, tau_field

        mesh = generate_cook_mesh(8)
        material = Material.from_constants(LINEAR_ELASTIC, 250.0, 0.45, 1.0)
        bcs = [DirichletBC("left", (0.0, 0.0)), TractionBC("right", (0.0, 6.25))]
        tau = tau_field(mesh.geometry(reference=True), material.moduli.mu, 1.0, None, StabilizationParams(),
                        transient=False)
        system = apply_dirichlet(assemble_steady_linear(mesh, material, bcs, tau), dirichlet_constraints(mesh, bcs, None))

        direct = solve_linear_system(system)
        iterative = solve_linear_system(system, LinearSolverConfig(kind=ITERATIVE, tol=1e-12, drop_tol=1e-6))

        assert np.allclose(iterative, direct, rtol=1e-6, atol=1e-8 * np.abs(direct).max())

    def test_dirichlet_values_exact(self):
        """Test that constrained entries equal their prescribed values."""
        from vms_solid.fem import LinearSystem, apply_dirichlet
        from vms_solid.solver import solve_linear_system

        system = apply_dirichlet(LinearSystem(csr_matrix(np.eye(3) * 2.0), np.ones(3)), {1: 0.125})

        assert solve_linear_system(system)[1] == 0.125


class TestConfig:
    """Test solver configuration validation."""

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"scheme": "bdf3", "dt": 0.1},
            {"scheme": "bdf1", "dt": 0.0},
            {"scheme": "bdf1", "dt": 0.1, "newton_tol": 0.0},
            {"scheme": "bdf1", "dt": 0.1, "newton_max_iter": 0},
        ],
    )
    def test_solver_config(self, kwargs):
        """Test invalid SolverConfig values."""
        from vms_solid.solver import SolverConfig

        with pytest.raises(ValueError):
            SolverConfig(**kwargs)

    def test_linear_config(self):
        """Test invalid LinearSolverConfig values."""
        from vms_solid.solver import LinearSolverConfig

        with pytest.raises(ValueError):
            LinearSolverConfig(kind="multigrid")
        with pytest.raises(ValueError):
            LinearSolverConfig(tol=2.0)


class TestAdvanceStep:
    """Test one implicit step."""

    def test_unloaded_step(self):
        """Test that nothing moves without loads."""
        from vms_solid.materials import NEO_HOOKEAN, Material
        from vms_solid.mesh import generate_box_mesh
        from vms_solid.solver import SolverConfig, advance_step
        from vms_solid.timestepping import State

        mesh = generate_box_mesh((1.0, 1.0), (2, 2))
        material = Material.from_constants(NEO_HOOKEAN, 10.0, 0.3, 1.0)
        state = State.initial(mesh.n_nodes, 2, np.full(mesh.n_elements, 1.0))

        new_mesh, new_state = advance_step(mesh, material, state, SolverConfig("bdf1", 0.1), [])

        assert np.allclose(new_state.u, 0.0)
        assert np.allclose(new_mesh.nodes_current, mesh.nodes_current)
        assert new_state.t == pytest.approx(0.1)
        assert new_state.step == 1

    def test_free_fall(self):
        """Test one BDF1 step of an unsupported body under gravity."""
        from vms_solid.fem import BodyForce
        from vms_solid.materials import LINEAR_ELASTIC, Material
        from vms_solid.mesh import generate_box_mesh
        from vms_solid.solver import SolverConfig, advance_step
        from vms_solid.timestepping import State

        mesh = generate_box_mesh((1.0, 1.0), (2, 2))
        material = Material.from_constants(LINEAR_ELASTIC, 100.0, 0.3, 1.0)
        state = State.initial(mesh.n_nodes, 2, np.full(mesh.n_elements, 1.0))

        _, new_state = advance_step(mesh, material, state, SolverConfig("bdf1", 0.1), [BodyForce((0.0, -2.0))])

        assert np.allclose(new_state.u[:, 1], -0.02)
        assert np.allclose(new_state.u[:, 0], 0.0, atol=1e-12)
        assert np.allclose(new_state.p, 0.0, atol=1e-10)

    def test_linear_converges_in_one_iteration(self):
        """Test that a linear problem needs a single Newton update."""
        from vms_solid.materials import LINEAR_ELASTIC, Material
        from vms_solid.solver import SolverConfig, advance_step
        from vms_solid.timestepping import State

        material = Material.from_constants(LINEAR_ELASTIC, 100.0, 0.3, 1.0)
        mesh, bcs = clamped_block(material)
        state = State.initial(mesh.n_nodes, 2, np.full(mesh.n_elements, 1.0))

        _, new_state = advance_step(mesh, material, state, SolverConfig("static", 1.0), bcs)

        assert len(new_state.newton_trace) == 2
        assert new_state.newton_trace[1] <= 1e-8 * new_state.newton_trace[0]

    def test_neo_hookean_converges(self):
        """Test a loaded Neo-Hookean block converges and the trace decreases."""
        from vms_solid.materials import NEO_HOOKEAN, Material
        from vms_solid.solver import SolverConfig, advance_step
        from vms_solid.timestepping import State

        material = Material.from_constants(NEO_HOOKEAN, 100.0, 0.45, 1.0)
        mesh, bcs = clamped_block(material)
        state = State.initial(mesh.n_nodes, 2, np.full(mesh.n_elements, 1.0))

        new_mesh, new_state = advance_step(mesh, material, state, SolverConfig("static", 1.0), bcs)

        trace = new_state.newton_trace
        assert 2 < len(trace) <= 26
        assert trace[-1] <= max(1e-8 * trace[0], 1e-14)
        assert new_state.u[:, 1].max() > 0.0
        assert not np.allclose(new_mesh.nodes_current, mesh.nodes_current)

    def test_convergence_error(self):
        """Test that max_iter=1 on a nonlinear problem raises ConvergenceError with its trace."""
        from vms_solid.errors import ConvergenceError
        from vms_solid.materials import NEO_HOOKEAN, Material
        from vms_solid.solver import SolverConfig, advance_step
        from vms_solid.timestepping import State

        material = Material.from_constants(NEO_HOOKEAN, 100.0, 0.45, 1.0)
        mesh, bcs = clamped_block(material, traction=(0.0, 10.0))
        state = State.initial(mesh.n_nodes, 2, np.full(mesh.n_elements, 1.0))

        with pytest.raises(ConvergenceError) as info:
            advance_step(mesh, material, state, SolverConfig("static", 1.0, newton_max_iter=1), bcs)
        assert len(info.value.trace) == 2

    def test_mass_conservation(self):
        """Test that rho V stays constant while the mesh moves."""
        from vms_solid.cases.diagnostics import total_mass
        from vms_solid.materials import NEO_HOOKEAN, Material
        from vms_solid.solver import SolverConfig, advance_step
        from vms_solid.timestepping import State

        material = Material.from_constants(NEO_HOOKEAN, 100.0, 0.4, 2.0)
        mesh, bcs = clamped_block(material)
        state = State.initial(mesh.n_nodes, 2, np.full(mesh.n_elements, 2.0))
        initial = total_mass(mesh, state.density)

        config = SolverConfig("bdf2", 0.05)
        for _ in range(3):
            mesh, state = advance_step(mesh, material, state, config, bcs)

        assert total_mass(mesh, state.density) == pytest.approx(initial, rel=1e-12)
        assert initial == pytest.approx(2.0)

    def test_volumetric_defect_accumulates(self):
        """Test that finite-strain steps carry the summed div(du) - mean(dp)/K per element."""
        from vms_solid.fem import constraint_defect
        from vms_solid.materials import NEO_HOOKEAN, Material
        from vms_solid.solver import SolverConfig, advance_step
        from vms_solid.timestepping import State

        material = Material.from_constants(NEO_HOOKEAN, 100.0, 0.45, 1.0)
        mesh0, bcs = clamped_block(material)
        state0 = State.initial(mesh0.n_nodes, 2, np.full(mesh0.n_elements, 1.0))
        config = SolverConfig("bdf1", 0.1)

        mesh1, state1 = advance_step(mesh0, material, state0, config, bcs)
        mesh2, state2 = advance_step(mesh1, material, state1, config, bcs)

        inv_K = material.moduli.inv_K
        first = constraint_defect(mesh0.geometry(), mesh0.elements, state1.u, state1.p, inv_K)
        second = constraint_defect(
            mesh1.geometry(), mesh1.elements, state2.u - state1.u, state2.p - state1.p, inv_K
        )
        assert np.allclose(state1.volumetric_defect, first)
        assert np.allclose(state2.volumetric_defect, first + second)
        assert np.abs(first).max() > 0.0

    def test_linear_kind_carries_no_defect(self):
        """Test that small-strain steps leave the volumetric defect unset."""
        from vms_solid.materials import LINEAR_ELASTIC, Material
        from vms_solid.solver import SolverConfig, advance_step
        from vms_solid.timestepping import State

        material = Material.from_constants(LINEAR_ELASTIC, 100.0, 0.3, 1.0)
        mesh, bcs = clamped_block(material)
        state = State.initial(mesh.n_nodes, 2, np.full(mesh.n_elements, 1.0))

        _, new_state = advance_step(mesh, material, state, SolverConfig("bdf1", 0.1), bcs)

        assert new_state.volumetric_defect is None
