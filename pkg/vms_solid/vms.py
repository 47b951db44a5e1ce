"""
VMS - Variational multi-scale stabilization for equal-order P1/P1 elements.

The fine-scale displacement is modelled algebraically, u' = tau_K R(u_h),
with identity projectors and quasi-static subscales. On linear simplices
the interior term 2 mu div dev[grad^s u_h] vanishes, so the residual keeps
only R = grad p_h + f - rho u_tt.

Stabilization parameter:
- static:  tau = alpha h^2 / (2 mu)
- dynamic: tau = (rho / dt^2 + 2 mu / (alpha h^2))^-1

The divergence terms of the transient form are weighted by tau_K itself and
vanish together with it.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from vms_solid.mesh import ElementGeometry, MeshGeometry

logger = logging.getLogger(__name__)

STATIC = "static"
DYNAMIC = "dynamic"
TAU_MODELS = (STATIC, DYNAMIC)


@dataclass(frozen=True)
class StabilizationParams:
    """Tuning constant and tau model. alpha = 0 switches stabilization off."""
    alpha: float = 1.0
    model: str = STATIC

    def __post_init__(self):
        if self.alpha < 0.0:
            raise ValueError(f"stabilization alpha must be >= 0, got {self.alpha}")
        if self.model not in TAU_MODELS:
            raise ValueError(f"stabilization model must be one of {TAU_MODELS}, got {self.model}")


@dataclass(frozen=True)
class FineScaleModel:
    """Algebraic subgrid scale: identity projectors, no time tracking."""
    projector: str = "identity"
    interior_residual: bool = False


@dataclass
class FineScaleTerms:
    """
    Element contributions of the fine scales (batched over elements).

    Index convention: a, b nodes; i, j axes.
        pressure_laplacian[e, a, b]       tau V grad N_a . grad N_b
        force_projection[e, a]            tau V f_e . grad N_a
        inertia_coupling[e, a, b, j]      tau rho c V/(d+1) dN_a/dx_j
        divergence_penalty[e, b, i, a, j] tau_div V dN_b/dx_i dN_a/dx_j
        pressure_divergence[e, b, i, a]   tau_div / K V/(d+1) dN_b/dx_i
    """
    pressure_laplacian: np.ndarray
    force_projection: np.ndarray
    inertia_coupling: np.ndarray
    divergence_penalty: np.ndarray
    pressure_divergence: np.ndarray


def compute_tau(
    h,
    mu: float,
    rho=None,
    dt: Optional[float] = None,
    model: str = STATIC,
    alpha: float = 1.0,
):
    """
    Element stabilization parameter.

    Args:
        h: Characteristic length (scalar or per-element array)
        mu: Shear modulus
        rho: Density (dynamic model)
        dt: Time step (dynamic model)
        model: "static" or "dynamic"
        alpha: Tuning constant

    Returns:
        tau with the shape of h

    Raises:
        ValueError: on non-positive inputs
    """
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr <= 0.0) or not mu > 0.0:
        raise ValueError("compute_tau needs h > 0 and mu > 0")
    if alpha < 0.0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")

    if alpha == 0.0:
        tau = np.zeros_like(h_arr)
    elif model == STATIC:
        tau = alpha * h_arr ** 2 / (2.0 * mu)
    elif model == DYNAMIC:
        if dt is None or not dt > 0.0:
            raise ValueError("dynamic tau needs dt > 0")
        rho_arr = np.asarray(rho, dtype=float)
        if np.any(rho_arr <= 0.0):
            raise ValueError("dynamic tau needs rho > 0")
        tau = 1.0 / (rho_arr / dt ** 2 + 2.0 * mu / (alpha * h_arr ** 2))
    else:
        raise ValueError(f"Unknown tau model: {model}")

    return float(tau) if np.ndim(tau) == 0 else tau


def tau_field(
    geometry: MeshGeometry,
    mu: float,
    density,
    dt: Optional[float],
    params: StabilizationParams,
    transient: bool = True,
) -> np.ndarray:
    """tau_K on every element; the dynamic model only applies to transient steps."""
    model = params.model if transient else STATIC
    rho = np.broadcast_to(np.asarray(density, dtype=float), geometry.h.shape)
    tau = compute_tau(geometry.h, mu, rho=rho, dt=dt, model=model, alpha=params.alpha)
    return np.atleast_1d(np.asarray(tau, dtype=float))


def fine_scale_pressure_terms(
    geometry: Union[ElementGeometry, MeshGeometry],
    tau,
    force: Optional[np.ndarray] = None,
    rho=0.0,
    inertia_coefficient: float = 0.0,
    tau_div=None,
    inv_K: float = 0.0,
) -> FineScaleTerms:
    """
    Element matrices and vectors injected by the fine scales.

    Args:
        geometry: One element or all elements
        tau: tau_K (scalar or per element)
        force: (E, d) known part of the residual (f - rho u_tt from history)
        rho: Element density
        inertia_coefficient: Weight of u^{n+1} in u_tt (stencil[0] / dt^2)
        tau_div: Divergence-penalty coefficient; None for static solves
        inv_K: 1/K

    Returns:
        FineScaleTerms with a leading element axis
    """
    if isinstance(geometry, ElementGeometry):
        grads = geometry.shape_gradients[None]
        volumes = np.array([geometry.volume])
    else:
        grads = geometry.shape_gradients
        volumes = geometry.volumes

    n_elements, n_local, dim = grads.shape
    tau = np.broadcast_to(np.asarray(tau, dtype=float), (n_elements,))
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (n_elements,))
    weight = tau * volumes

    laplacian = weight[:, None, None] * np.einsum("ead,ebd->eab", grads, grads)

    if force is None:
        projection = np.zeros((n_elements, n_local))
    else:
        projection = weight[:, None] * np.einsum("ed,ead->ea", force, grads)

    coupling = (weight * rho * inertia_coefficient / n_local)[:, None, None]
    inertia = np.broadcast_to(
        (coupling * grads)[:, :, None, :], (n_elements, n_local, n_local, dim)
    ).copy()

    if tau_div is None:
        penalty = np.zeros((n_elements, n_local, dim, n_local, dim))
        correction = np.zeros((n_elements, n_local, dim, n_local))
    else:
        div_weight = np.broadcast_to(np.asarray(tau_div, dtype=float), (n_elements,)) * volumes
        penalty = div_weight[:, None, None, None, None] * np.einsum("ebi,eaj->ebiaj", grads, grads)
        correction = np.broadcast_to(
            (div_weight * inv_K / n_local)[:, None, None, None] * grads[:, :, :, None],
            (n_elements, n_local, dim, n_local),
        ).copy()

    return FineScaleTerms(
        pressure_laplacian=laplacian,
        force_projection=projection,
        inertia_coupling=inertia,
        divergence_penalty=penalty,
        pressure_divergence=correction,
    )
