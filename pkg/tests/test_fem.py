"""
Tests for the mixed P1/P1 discretization and assembly.
"""

import numpy as np
import pytest
from scipy.sparse import csr_matrix


def linear_material(nu=0.3):
    from vms_solid.materials import LINEAR_ELASTIC, Material

    return Material.from_constants(LINEAR_ELASTIC, 100.0, nu, 1.0)


def static_tau(mesh, material, alpha=1.0):
    from vms_solid.vms import StabilizationParams, tau_field

    return tau_field(mesh.geometry(reference=True), material.moduli.mu, material.rho0, None,
                     StabilizationParams(alpha=alpha), transient=False)


class TestDofMap:
    """Test the degree-of-freedom numbering."""

    def test_numbering(self):
        """Test displacement and pressure dof indices."""
        from vms_solid.fem import DofMap

        dofmap = DofMap(n_nodes=4, dim=2)

        assert dofmap.n_u == 8
        assert dofmap.total_dofs == 12
        assert dofmap.u_dof(3, 1) == 7
        assert dofmap.p_dof(2) == 10

    def test_element_dofs(self):
        """Test the local ordering u(a, i) then p(a)."""
        from vms_solid.fem import DofMap

        dofs = DofMap(n_nodes=4, dim=2).element_dofs(np.array([[0, 2, 3]]))

        assert dofs.tolist() == [[0, 1, 4, 5, 6, 7, 8, 10, 11]]

    def test_split_join(self):
        """Test that split undoes join."""
        from vms_solid.fem import DofMap

        dofmap = DofMap(n_nodes=3, dim=3)
        U = np.arange(9.0).reshape(3, 3)
        P = np.array([-1.0, -2.0, -3.0])
        U_back, P_back = dofmap.split(dofmap.join(U, P))

        assert np.array_equal(U_back, U)
        assert np.array_equal(P_back, P)


class TestQuadrature:
    """Test the tabulated simplex rules."""

    @pytest.mark.parametrize("dim, degree", [(2, 1), (2, 2), (2, 4), (3, 1), (3, 2)])
    def test_weights_sum_to_one(self, dim, degree):
        """Test the weights are fractions of the volume."""
        from vms_solid.fem import quadrature_rule

        points, weights = quadrature_rule(dim, degree)

        assert weights.sum() == pytest.approx(1.0)
        assert np.allclose(points.sum(axis=1), 1.0)

    def test_quadratic_exactness(self):
        """Test that the degree-2 triangle rule integrates x^2 exactly."""
        from vms_solid.fem import quadrature_rule

        points, weights = quadrature_rule(2, 2)
        x = points[:, 1]

        # integral of x^2 over the unit triangle is 1/12, its area 1/2
        assert 0.5 * np.dot(weights, x ** 2) == pytest.approx(1.0 / 12.0)

    def test_missing_rule(self):
        """Test that an unavailable degree raises AssemblyError."""
        from vms_solid.errors import AssemblyError
        from vms_solid.fem import quadrature_rule

        with pytest.raises(AssemblyError):
            quadrature_rule(3, 5)


class TestLoads:
    """Test traction and body force integration."""

    def test_traction_split(self):
        """Test that each node of a unit edge gets half the load."""
        from vms_solid.fem import integrate_traction
        from vms_solid.mesh import generate_box_mesh

        mesh = generate_box_mesh((1.0, 1.0), (1, 1))
        loads = integrate_traction(mesh, "xmax", (0.0, 6.25))

        nodes = mesh.nodes_with_tag("xmax")
        assert np.allclose(loads[nodes], [[0.0, 3.125], [0.0, 3.125]])
        assert np.allclose(np.delete(loads, nodes, axis=0), 0.0)

    def test_cook_total_shear(self):
        """Test that the tip load sums to traction times edge length."""
        from vms_solid.fem import integrate_traction
        from vms_solid.mesh import generate_cook_mesh

        loads = integrate_traction(generate_cook_mesh(8), "right", (0.0, 6.25))

        assert loads[:, 1].sum() == pytest.approx(100.0)
        assert loads[:, 0].sum() == pytest.approx(0.0)

    def test_unknown_tag(self):
        """Test that a missing tag raises AssemblyError."""
        from vms_solid.errors import AssemblyError
        from vms_solid.fem import integrate_traction
        from vms_solid.mesh import generate_box_mesh

        with pytest.raises(AssemblyError):
            integrate_traction(generate_box_mesh((1.0, 1.0), (1, 1)), "tip", (1.0, 0.0))

    def test_gravity_total(self):
        """Test that gravity sums to rho0 g times the volume."""
        from vms_solid.fem import BodyForce, body_force_vector
        from vms_solid.materials import LINEAR_ELASTIC, Material
        from vms_solid.mesh import generate_box_mesh

        mesh = generate_box_mesh((2.0, 1.0, 1.0), (2, 1, 1))
        material = Material.from_constants(LINEAR_ELASTIC, 1.0, 0.3, 3.0)
        loads = body_force_vector(mesh, material, BodyForce((0.0, 0.0, -1.0)), None)

        assert loads.sum(axis=0) == pytest.approx([0.0, 0.0, -6.0])

    def test_linear_ramp(self):
        """Test the ramp multiplier."""
        from vms_solid.fem import RAMP_CONSTANT, RAMP_LINEAR, TractionBC, ramp_factor

        assert ramp_factor(RAMP_LINEAR, 0.5, 2.0) == pytest.approx(0.25)
        assert ramp_factor(RAMP_LINEAR, 3.0, 2.0) == 1.0
        assert ramp_factor(RAMP_LINEAR, None, 2.0) == 1.0
        assert ramp_factor(RAMP_CONSTANT, 0.1, 2.0) == 1.0
        bc = TractionBC("right", (0.0, 4.0), ramp=RAMP_LINEAR, ramp_time=4.0)
        assert np.allclose(bc.values_at(1.0), [0.0, 1.0])


class TestDirichlet:
    """Test Dirichlet constraints and their elimination."""

    def test_constraints(self):
        """Test the dofs of a clamped edge and a single-component roller."""
        from vms_solid.fem import DirichletBC, dirichlet_constraints
        from vms_solid.mesh import generate_box_mesh

        mesh = generate_box_mesh((1.0, 1.0), (1, 1))
        bcs = [DirichletBC("xmin", (0.0, 0.0)), DirichletBC("xmax", (0.5, 0.0), components=(0,))]
        constraints = dirichlet_constraints(mesh, bcs, None)

        assert len(constraints) == 6
        for node in mesh.nodes_with_tag("xmax"):
            assert constraints[2 * node] == 0.5
            assert 2 * node + 1 not in constraints

    def test_conflicting_values(self):
        """Test that one dof with two values is rejected."""
        from vms_solid.errors import DirichletConflictError
        from vms_solid.fem import DirichletBC, dirichlet_constraints
        from vms_solid.mesh import generate_box_mesh

        mesh = generate_box_mesh((1.0, 1.0), (1, 1))
        bcs = [DirichletBC("xmin", (0.0, 0.0)), DirichletBC("ymin", (1.0, 0.0))]

        with pytest.raises(DirichletConflictError):
            dirichlet_constraints(mesh, bcs, None)

    def test_traction_on_prescribed_axis(self):
        """Test that a traction on a prescribed axis is rejected."""
        from vms_solid.errors import DirichletConflictError
        from vms_solid.fem import DirichletBC, TractionBC, validate_boundary_conditions
        from vms_solid.mesh import generate_box_mesh

        mesh = generate_box_mesh((1.0, 1.0), (1, 1))
        allowed = [DirichletBC("xmax", (0.0, 0.0), components=(0,)), TractionBC("xmax", (0.0, 1.0))]
        rejected = [DirichletBC("xmax", (0.0, 0.0)), TractionBC("xmax", (0.0, 1.0))]

        validate_boundary_conditions(mesh, allowed)
        with pytest.raises(DirichletConflictError):
            validate_boundary_conditions(mesh, rejected)

    def test_apply_dirichlet(self):
        """Test row/column elimination on a 2x2 system."""
        from vms_solid.fem import LinearSystem, apply_dirichlet
        from vms_solid.solver import solve_linear_system

        system = LinearSystem(csr_matrix(np.array([[4.0, 1.0], [1.0, 3.0]])), np.array([1.0, 2.0]))
        constrained = apply_dirichlet(system, {0: 1.0})
        x = solve_linear_system(constrained)

        assert constrained.matrix.toarray().tolist() == [[1.0, 0.0], [0.0, 3.0]]
        assert np.allclose(x, [1.0, 1.0 / 3.0])
        assert constrained.dirichlet == {0: 1.0}

    def test_apply_dirichlet_conflict(self):
        """Test that pairs with two values for one dof are rejected."""
        from vms_solid.errors import DirichletConflictError
        from vms_solid.fem import LinearSystem, apply_dirichlet

        system = LinearSystem(csr_matrix(np.eye(2)), np.zeros(2))

        with pytest.raises(DirichletConflictError):
            apply_dirichlet(system, [(1, 0.0), (1, 2.0)])


class TestAssembly:
    """Test global assembly."""

    def test_zero_load(self):
        """Test that an unloaded body gives a zero rhs."""
        from vms_solid.fem import assemble_steady_linear
        from vms_solid.mesh import generate_cook_mesh

        mesh = generate_cook_mesh(4)
        material = linear_material()
        system = assemble_steady_linear(mesh, material, [], static_tau(mesh, material))

        assert system.matrix.shape == (75, 75)
        assert np.allclose(system.rhs, 0.0)

    def test_symmetric(self):
        """Test that the stabilized static operator is symmetric."""
        from vms_solid.fem import assemble_steady_linear
        from vms_solid.mesh import generate_box_mesh, perturb_interior_nodes

        mesh = perturb_interior_nodes(generate_box_mesh((1.0, 1.0, 1.0), (2, 2, 2)), 0.1, seed=5)
        material = linear_material(0.45)
        matrix = assemble_steady_linear(mesh, material, [], static_tau(mesh, material)).matrix

        assert abs(matrix - matrix.T).max() < 1e-10 * abs(matrix).max()

    def test_rigid_translation(self):
        """Test that a rigid translation produces no internal force."""
        from vms_solid.fem import assemble_residual
        from vms_solid.materials import NEO_HOOKEAN, Material
        from vms_solid.mesh import generate_box_mesh

        mesh = generate_box_mesh((1.0, 1.0, 1.0), (2, 2, 2))
        U = np.tile([0.3, -0.1, 0.2], (mesh.n_nodes, 1))
        P = np.zeros(mesh.n_nodes)
        for material in (linear_material(), Material.from_constants(NEO_HOOKEAN, 100.0, 0.3, 1.0)):
            tau = static_tau(mesh, material)
            _, residual = assemble_residual(mesh, material, [], tau, U, P)
            assert np.allclose(residual, 0.0, atol=1e-10)

    def test_constant_pressure_balance(self):
        """Test that a uniform pressure only loads boundary nodes."""
        from vms_solid.fem import assemble_residual
        from vms_solid.mesh import generate_box_mesh

        mesh = generate_box_mesh((1.0, 1.0), (4, 4))
        material = linear_material()
        U = np.zeros((mesh.n_nodes, 2))
        _, residual = assemble_residual(mesh, material, [], static_tau(mesh, material), U, np.ones(mesh.n_nodes))

        interior = np.setdiff1d(np.arange(mesh.n_nodes), mesh.boundary_nodes())
        momentum = residual[:2 * mesh.n_nodes].reshape(-1, 2)
        assert np.allclose(momentum[interior], 0.0, atol=1e-12)
        assert np.allclose(momentum.sum(axis=0), 0.0, atol=1e-12)

    def test_reactions_balance_applied_load(self):
        """Test that the supports carry the total traction of a solved cantilever."""
        from vms_solid.fem import (
            DirichletBC,
            TractionBC,
            assemble_residual,
            dirichlet_constraints,
            free_residual_norm,
        )
        from vms_solid.mesh import generate_box_mesh
        from vms_solid.verification import solve_static

        mesh = generate_box_mesh((2.0, 1.0), (6, 3))
        material = linear_material(0.45)
        bcs = [DirichletBC("xmin", (0.0, 0.0)), TractionBC("xmax", (0.5, -3.0))]

        U, P = solve_static(mesh, material, bcs)
        _, residual = assemble_residual(mesh, material, bcs, static_tau(mesh, material), U, P)

        constrained = list(dirichlet_constraints(mesh, bcs, None))
        assert free_residual_norm(residual, constrained) <= 1e-8 * np.abs(residual).max()
        momentum = residual[:2 * mesh.n_nodes].reshape(-1, 2)
        reactions = momentum[mesh.nodes_with_tag("xmin")].sum(axis=0)
        assert reactions == pytest.approx([-0.5, 3.0])

    def test_zero_alpha_recovers_galerkin(self):
        """Test that alpha = 0 leaves only -(1/K) M in the pressure block."""
        from vms_solid.fem import assemble_steady_linear
        from vms_solid.mesh import generate_box_mesh

        mesh = generate_box_mesh((1.0, 1.0), (3, 3))
        material = linear_material(0.45)
        n_u = 2 * mesh.n_nodes

        tau = static_tau(mesh, material, alpha=0.0)
        galerkin = assemble_steady_linear(mesh, material, [], tau).matrix.toarray()
        stabilized = assemble_steady_linear(mesh, material, [], static_tau(mesh, material)).matrix.toarray()

        assert not tau.any()
        pressure_block = galerkin[n_u:, n_u:]
        assert pressure_block.sum() == pytest.approx(-material.moduli.inv_K * 1.0)
        assert np.all(np.diag(pressure_block) < 0.0)
        assert np.allclose(galerkin[:n_u], stabilized[:n_u])
        laplacian = galerkin[n_u:, n_u:] - stabilized[n_u:, n_u:]
        assert np.allclose(laplacian @ np.ones(mesh.n_nodes), 0.0, atol=1e-12)
        assert np.abs(laplacian).max() > 0.0

    def test_steady_needs_linear_material(self):
        """Test AssemblyError for finite-strain kinds and a missing tau."""
        from vms_solid.errors import AssemblyError
        from vms_solid.fem import assemble_steady_linear
        from vms_solid.materials import NEO_HOOKEAN, Material
        from vms_solid.mesh import generate_box_mesh

        mesh = generate_box_mesh((1.0, 1.0), (1, 1))
        material = Material.from_constants(NEO_HOOKEAN, 1.0, 0.3, 1.0)

        with pytest.raises(AssemblyError):
            assemble_steady_linear(mesh, material, [], np.zeros(2))
        with pytest.raises(AssemblyError):
            assemble_steady_linear(mesh, linear_material(), [], None)

    def test_tau_shape_checked(self):
        """Test that a tau field of the wrong length is rejected."""
        from vms_solid.errors import AssemblyError
        from vms_solid.fem import assemble_steady_linear
        from vms_solid.mesh import generate_box_mesh

        mesh = generate_box_mesh((1.0, 1.0), (1, 1))

        with pytest.raises(AssemblyError):
            assemble_steady_linear(mesh, linear_material(), [], np.zeros(3))

    def test_transient_needs_history(self):
        """Test that BDF2 without three levels raises AssemblyError."""
        from vms_solid.errors import AssemblyError
        from vms_solid.fem import assemble_transient
        from vms_solid.mesh import generate_box_mesh
        from vms_solid.timestepping import BDF2, State

        mesh = generate_box_mesh((1.0, 1.0), (1, 1))
        state = State.initial(mesh.n_nodes, 2, np.ones(mesh.n_elements)).trial(0.1)

        with pytest.raises(AssemblyError):
            assemble_transient(mesh, linear_material(), state, 0.1, BDF2, [], np.zeros(2))

    def test_accumulated_defect_enters_divergence_penalty(self):
        """Test that a carried constraint defect adds tau V D grad N to the momentum rows only."""
        from dataclasses import replace

        from vms_solid.fem import assemble_transient
        from vms_solid.materials import NEO_HOOKEAN, Material
        from vms_solid.mesh import generate_box_mesh
        from vms_solid.timestepping import BDF1, State

        mesh = generate_box_mesh((1.0, 1.0), (2, 2))
        material = Material.from_constants(NEO_HOOKEAN, 100.0, 0.3, 1.0)
        state = State.initial(mesh.n_nodes, 2, np.ones(mesh.n_elements)).trial(0.1)
        tau = np.full(mesh.n_elements, 0.01)
        defect = np.random.default_rng(3).uniform(-0.1, 0.1, mesh.n_elements)

        plain = assemble_transient(mesh, material, state, 0.1, BDF1, [], tau)
        carried = assemble_transient(
            mesh, material, replace(state, volumetric_defect=defect), 0.1, BDF1, [], tau
        )

        geometry = mesh.geometry()
        expected = np.zeros((mesh.n_nodes, 2))
        np.add.at(
            expected,
            mesh.elements,
            (tau * geometry.volumes * defect)[:, None, None] * geometry.shape_gradients,
        )
        n_u = 2 * mesh.n_nodes
        assert np.allclose((plain.rhs - carried.rhs)[:n_u].reshape(-1, 2), expected)
        assert np.allclose(plain.rhs[n_u:], carried.rhs[n_u:])
        assert np.allclose((plain.matrix - carried.matrix).toarray(), 0.0)

    def test_linear_kind_ignores_carried_defect(self):
        """Test that the small-strain kind assembles the penalty on totals only."""
        from dataclasses import replace

        from vms_solid.fem import assemble_transient
        from vms_solid.mesh import generate_box_mesh
        from vms_solid.timestepping import BDF1, State

        mesh = generate_box_mesh((1.0, 1.0), (2, 2))
        state = State.initial(mesh.n_nodes, 2, np.ones(mesh.n_elements)).trial(0.1)
        tau = np.full(mesh.n_elements, 0.01)

        plain = assemble_transient(mesh, linear_material(), state, 0.1, BDF1, [], tau)
        carried = assemble_transient(
            mesh, linear_material(), replace(state, volumetric_defect=np.ones(mesh.n_elements)),
            0.1, BDF1, [], tau,
        )

        assert np.allclose(plain.rhs, carried.rhs)

    def test_total_measure(self):
        """Test boundary lengths of a rectangle."""
        from vms_solid.fem import total_measure
        from vms_solid.mesh import generate_box_mesh

        mesh = generate_box_mesh((3.0, 2.0), (3, 2))

        assert total_measure(mesh, "ymax") == pytest.approx(3.0)
        assert total_measure(mesh, "xmin") == pytest.approx(2.0)

    def test_free_residual_norm(self):
        """Test that constrained rows are excluded."""
        from vms_solid.fem import free_residual_norm

        assert free_residual_norm(np.array([3.0, 100.0, 4.0]), [1]) == pytest.approx(5.0)
