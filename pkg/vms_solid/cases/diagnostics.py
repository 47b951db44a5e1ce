"""
Diagnostics - Derived quantities for outputs, probes and acceptance checks.
"""

import logging
import math
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.sparse import coo_matrix, csr_matrix

from vms_solid.materials import (
    LINEAR_ELASTIC,
    NEO_HOOKEAN,
    Material,
    linear_dev_stress,
    neo_hookean_dev_stress,
    simo_taylor_pressure,
    svk_stress,
    transpose,
    updated_lagrangian_F,
)
from vms_solid.mesh import Mesh, element_jacobians

logger = logging.getLogger(__name__)

THETA_EPSILON = 1e-30
ORDER_BOUND = 20.0


def von_mises(dev_stress: np.ndarray):
    """sqrt(3/2 dev:dev) of a deviatoric 3x3 stress (batched over leading axes)."""
    dev_stress = np.asarray(dev_stress, dtype=float)
    value = np.sqrt(1.5 * np.einsum("...ij,...ij->...", dev_stress, dev_stress))
    return float(value) if np.ndim(value) == 0 else value


def node_adjacency(mesh: Mesh) -> csr_matrix:
    """Boolean node-to-node adjacency through shared elements, without the diagonal."""
    n_local = mesh.elements.shape[1]
    rows = np.repeat(mesh.elements, n_local, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, n_local)).ravel()
    off_diagonal = rows != cols
    ones = np.ones(int(off_diagonal.sum()))
    adjacency = coo_matrix(
        (ones, (rows[off_diagonal], cols[off_diagonal])), shape=(mesh.n_nodes, mesh.n_nodes)
    ).tocsr()
    adjacency.data[:] = 1.0
    return adjacency


def pressure_oscillation_indicator(mesh: Mesh, p: np.ndarray) -> float:
    """
    Relative distance of a nodal pressure field from its one-ring average.

    Theta = ||p - avg(p)|| / max(||p||, 1e-30), where avg(p)_i is the mean of
    p over the nodes sharing an element with node i.
    """
    p = np.asarray(p, dtype=float)
    adjacency = node_adjacency(mesh)
    counts = np.asarray(adjacency.sum(axis=1)).ravel()
    averaged = (adjacency @ p) / np.maximum(counts, 1.0)
    return float(np.linalg.norm(p - averaged) / max(np.linalg.norm(p), THETA_EPSILON))


def displacement_gradients(mesh: Mesh, U: np.ndarray, reference: bool = True) -> np.ndarray:
    """(E, d, d) element gradient of a nodal P1 field on either configuration."""
    gradients = mesh.geometry(reference=reference).shape_gradients
    return np.einsum("eai,eaj->eij", U[mesh.elements], gradients)


def divergence_ratio(mesh: Mesh, U: np.ndarray) -> float:
    """||div u||_L2 / ||grad u||_L2 on the reference configuration."""
    volumes = mesh.volumes(reference=True)
    grad_u = displacement_gradients(mesh, U)
    divergence = np.trace(grad_u, axis1=1, axis2=2)
    numerator = math.sqrt(float(np.sum(volumes * divergence ** 2)))
    denominator = math.sqrt(float(np.sum(volumes * np.einsum("eij,eij->e", grad_u, grad_u))))
    return numerator / max(denominator, THETA_EPSILON)


def total_mass(mesh: Mesh, density: np.ndarray) -> float:
    """Sum of rho_e V_e on the current configuration."""
    return float(np.sum(np.asarray(density) * mesh.volumes()))


def element_dev_stress(mesh: Mesh, material: Material, U: np.ndarray) -> np.ndarray:
    """
    Deviatoric Cauchy stress per element, (E, 3, 3).

    Small strain uses grad_X u. Neo-Hookean stress is recovered from the
    current mesh: F = (I - grad_x u)^-1. St. Venant-Kirchhoff uses
    F = I + grad_X u.
    """
    mu = material.moduli.mu
    if material.kind == LINEAR_ELASTIC:
        return linear_dev_stress(displacement_gradients(mesh, U), mu)
    if material.kind == NEO_HOOKEAN:
        F, J = updated_lagrangian_F(displacement_gradients(mesh, U, reference=False))
        return neo_hookean_dev_stress(F @ transpose(F), J, mu)
    F = np.eye(mesh.dim) + displacement_gradients(mesh, U)
    _, _, dev = svk_stress(F, mu, material.moduli.lam)
    return dev


def nodal_average(mesh: Mesh, element_values: np.ndarray) -> np.ndarray:
    """Volume-weighted average of element scalars at the nodes."""
    volumes = mesh.volumes()
    weights = np.zeros(mesh.n_nodes)
    totals = np.zeros(mesh.n_nodes)
    n_local = mesh.elements.shape[1]
    np.add.at(weights, mesh.elements, np.repeat(volumes[:, None], n_local, axis=1))
    np.add.at(totals, mesh.elements, np.repeat((volumes * element_values)[:, None], n_local, axis=1))
    return totals / np.maximum(weights, THETA_EPSILON)


def nodal_von_mises(mesh: Mesh, material: Material, U: np.ndarray) -> np.ndarray:
    return nodal_average(mesh, von_mises(element_dev_stress(mesh, material, U)))


def volumetric_pressure(mesh: Mesh, material: Material) -> Optional[np.ndarray]:
    """Simo-Taylor U'(J) per element for the Neo-Hookean kind with finite K, else None."""
    if material.kind != NEO_HOOKEAN or material.moduli.incompressible:
        return None
    return np.atleast_1d(simo_taylor_pressure(element_jacobians(mesh), material.moduli.K))


def _mesh_sizes(count: int, sizes: Optional[Sequence[float]]) -> List[float]:
    if sizes is None:
        return [2.0 ** -i for i in range(count)]
    if len(sizes) != count:
        raise ValueError(f"{len(sizes)} mesh sizes for {count} values")
    return [float(h) for h in sizes]


def _self_convergence_order(coarse: float, fine: float, h: Sequence[float]) -> Optional[float]:
    """
    Order s with (h0^s - h1^s) / (h1^s - h2^s) = coarse / fine, or None
    when no s in [-ORDER_BOUND, ORDER_BOUND] fits.
    """
    a = math.log(h[0] / h[1])
    b = math.log(h[1] / h[2])
    target = math.log(coarse / fine)

    def gap(s: float) -> float:
        shape = a / b if s == 0.0 else math.expm1(s * a) / math.expm1(s * b)
        return s * b + math.log(shape) - target

    if gap(-ORDER_BOUND) * gap(ORDER_BOUND) > 0.0:
        return None
    return float(brentq(gap, -ORDER_BOUND, ORDER_BOUND))


def observed_orders(values: Sequence[float], sizes: Optional[Sequence[float]] = None) -> List[Optional[float]]:
    """
    Self-convergence order of a sequence computed on meshes of size ``sizes``.

    Entry i uses values i-2, i-1, i; the first two entries are None. Without
    sizes every mesh halves the previous one.
    """
    h = _mesh_sizes(len(values), sizes)
    orders: List[Optional[float]] = [None] * min(len(values), 2)
    for i in range(2, len(values)):
        coarse = abs(values[i - 1] - values[i - 2])
        fine = abs(values[i] - values[i - 1])
        if coarse == 0.0 or fine == 0.0:
            orders.append(None)
        else:
            orders.append(_self_convergence_order(coarse, fine, h[i - 2:i + 1]))
    return orders


def error_orders(errors: Sequence[float], sizes: Optional[Sequence[float]] = None) -> List[float]:
    """Observed orders log(e_i / e_{i+1}) / log(h_i / h_{i+1}) of an error sequence."""
    h = _mesh_sizes(len(errors), sizes)
    return [math.log(errors[i] / errors[i + 1]) / math.log(h[i] / h[i + 1]) for i in range(len(errors) - 1)]
