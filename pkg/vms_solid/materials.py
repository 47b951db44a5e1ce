"""
Materials - Constitutive models and kinematics.

Models:
- linear_elastic: small-strain Hooke law, sigma = p I + 2 mu dev[grad^s u]
- neo_hookean: Neo-Hookean deviator mu J^(-5/3) dev[F F^T] with a
  Simo-Taylor volumetric energy
- svk: St. Venant-Kirchhoff, S = lambda tr(E) I + 2 mu E

All tensor functions accept arrays with leading batch axes. Plane strain is
used in 2D: tensors are embedded in 3x3 with zero out-of-plane strain
(F_zz = 1) before taking deviators, so out-of-plane stress can be non-zero.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from vms_solid.errors import KinematicInversionError, ModuliRangeError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

LINEAR_ELASTIC = "linear_elastic"
NEO_HOOKEAN = "neo_hookean"
SVK = "svk"

MATERIAL_KINDS = (LINEAR_ELASTIC, NEO_HOOKEAN, SVK)

I3 = np.eye(3)


@dataclass(frozen=True)
class Moduli:
    """Isotropic elastic moduli. K is math.inf for nu = 0.5."""
    E: float
    nu: float
    mu: float
    K: float

    @property
    def inv_K(self) -> float:
        """1/K, exactly 0.0 for an incompressible material."""
        return 0.0 if math.isinf(self.K) else 1.0 / self.K

    @property
    def lam(self) -> float:
        """Lame's first parameter lambda = K - 2 mu / 3."""
        return self.K - 2.0 * self.mu / 3.0

    @property
    def incompressible(self) -> bool:
        return math.isinf(self.K)


@dataclass(frozen=True)
class Material:
    """A constitutive model with its moduli and initial density."""
    kind: str
    moduli: Moduli
    rho0: float

    def __post_init__(self):
        if self.kind not in MATERIAL_KINDS:
            raise ModuliRangeError(f"Unknown material kind: {self.kind}")
        if not self.rho0 > 0.0:
            raise ModuliRangeError(f"rho0 must be positive, got {self.rho0}")
        if self.kind == SVK and self.moduli.incompressible:
            raise ModuliRangeError("svk requires nu < 0.5 (lambda is unbounded)")

    @classmethod
    def from_constants(cls, kind: str, E: float, nu: float, rho0: float) -> "Material":
        return cls(kind=kind, moduli=compute_moduli(E, nu), rho0=rho0)

    @property
    def finite_strain(self) -> bool:
        return self.kind != LINEAR_ELASTIC


def compute_moduli(E: float, nu: float) -> Moduli:
    """
    Shear and bulk moduli from Young's modulus and Poisson's ratio.

    Args:
        E: Young's modulus (> 0)
        nu: Poisson's ratio (-1 < nu <= 0.5)

    Returns:
        Moduli; K = inf (and inv_K = 0) when nu == 0.5

    Raises:
        ModuliRangeError: for out-of-range constants
    """
    if not E > 0.0:
        raise ModuliRangeError(f"E must be positive, got {E}")
    if not -1.0 < nu <= 0.5:
        raise ModuliRangeError(f"nu must satisfy -1 < nu <= 0.5, got {nu}")

    mu = E / (2.0 * (1.0 + nu))
    K = math.inf if nu == 0.5 else E / (3.0 * (1.0 - 2.0 * nu))
    return Moduli(E=float(E), nu=float(nu), mu=mu, K=K)


def embed(tensor: np.ndarray, out_of_plane: float = 0.0) -> np.ndarray:
    """Return the 3x3 form of a 2x2 (plane strain) or 3x3 tensor."""
    tensor = np.asarray(tensor, dtype=float)
    if tensor.shape[-1] == 3:
        return tensor
    out = np.zeros(tensor.shape[:-2] + (3, 3))
    out[..., :2, :2] = tensor
    out[..., 2, 2] = out_of_plane
    return out


def deviator(tensor: np.ndarray) -> np.ndarray:
    """dev A = A - tr(A)/3 I for 3x3 tensors."""
    trace = np.trace(tensor, axis1=-2, axis2=-1)
    return tensor - trace[..., None, None] / 3.0 * I3


def transpose(tensor: np.ndarray) -> np.ndarray:
    return np.swapaxes(tensor, -1, -2)


def linear_dev_stress(grad_u: np.ndarray, mu: float) -> np.ndarray:
    """2 mu dev[sym grad u] as a 3x3 tensor (zero out-of-plane strain in 2D)."""
    strain = 0.5 * (grad_u + transpose(grad_u))
    return 2.0 * mu * deviator(embed(strain, 0.0))


def volumetric_strain(grad_u: np.ndarray) -> ArrayLike:
    """eps_v = tr(grad u)."""
    return np.trace(grad_u, axis1=-2, axis2=-1)


def updated_lagrangian_F(grad_u_current: np.ndarray) -> Tuple[np.ndarray, ArrayLike]:
    """
    Deformation gradient from the current-frame displacement gradient.

    F = (I - grad_x u)^-1, J = det F.

    Raises:
        KinematicInversionError: if det(I - grad_x u) <= 0
    """
    grad_u_current = np.asarray(grad_u_current, dtype=float)
    dim = grad_u_current.shape[-1]
    inverse_map = np.eye(dim) - grad_u_current
    det = np.linalg.det(inverse_map)
    if np.any(det <= 0.0):
        raise KinematicInversionError(f"kinematic inversion: det(I - grad u) = {np.min(det):.3e}")
    return np.linalg.inv(inverse_map), 1.0 / det


def ffT_incremental(grad_u: np.ndarray, grad_delta_u: np.ndarray) -> np.ndarray:
    """
    Left Cauchy-Green tensor after an increment, expanded to first order.

    Total part (I - grad u)^-1 (I - grad u)^-T plus 2 eps(du) + G G^T
    + G grad u^T + grad u G^T with G = grad du. Equals the exact F F^T
    when grad_delta_u = 0.
    """
    F, _ = updated_lagrangian_F(grad_u)
    G = np.asarray(grad_delta_u, dtype=float)
    return (
        F @ transpose(F)
        + (G + transpose(G))
        + G @ transpose(G)
        + G @ transpose(grad_u)
        + grad_u @ transpose(G)
    )


def incremental_stretch_defect(grad_u: np.ndarray, grad_delta_u: np.ndarray) -> np.ndarray:
    """
    Relative gap between the first-order expansion and the exact update.

    The exact tensor is (I + G) F F^T (I + G)^T with F from the current
    frame gradient. Returns one value per leading batch entry.
    """
    F, _ = updated_lagrangian_F(grad_u)
    dim = F.shape[-1]
    F_next = (np.eye(dim) + grad_delta_u) @ F
    exact = F_next @ transpose(F_next)
    approx = ffT_incremental(grad_u, grad_delta_u)
    scale = np.linalg.norm(exact, axis=(-2, -1))
    return np.linalg.norm(approx - exact, axis=(-2, -1)) / scale


def simo_taylor_energy(J: ArrayLike, kappa: float) -> ArrayLike:
    """U(J) = kappa/4 (J^2 - 1) - kappa/2 ln J."""
    J = np.asarray(J, dtype=float)
    return 0.25 * kappa * (J ** 2 - 1.0) - 0.5 * kappa * np.log(J)


def simo_taylor_pressure(J: ArrayLike, kappa: float) -> ArrayLike:
    """
    Volumetric pressure U'(J) = kappa/2 (J - 1/J).

    The minus sign keeps the reference state J = 1 stress free.

    Raises:
        KinematicInversionError: if J <= 0
        ModuliRangeError: if kappa is not finite
    """
    if not math.isfinite(kappa):
        raise ModuliRangeError("Simo-Taylor pressure needs a finite bulk modulus")
    J_arr = np.asarray(J, dtype=float)
    if np.any(J_arr <= 0.0):
        raise KinematicInversionError(f"J must be positive, got {np.min(J_arr)}")
    value = 0.5 * kappa * (J_arr - 1.0 / J_arr)
    return float(value) if np.ndim(value) == 0 else value


def neo_hookean_dev_stress(FFt: np.ndarray, J: ArrayLike, mu: float) -> np.ndarray:
    """mu J^(-5/3) dev[F F^T], 3x3 (F_zz = 1 in 2D)."""
    J = np.asarray(J, dtype=float)
    return mu * J[..., None, None] ** (-5.0 / 3.0) * deviator(embed(FFt, 1.0))


def svk_stress(F: np.ndarray, mu: float, lam: float) -> Tuple[np.ndarray, ArrayLike, np.ndarray]:
    """
    St. Venant-Kirchhoff Cauchy stress and its split.

    S = lambda tr(E) I + 2 mu E with E = (F^T F - I)/2, sigma = F S F^T / J.

    Returns:
        (sigma, pressure part tr(sigma)/3, deviatoric part), 3x3 tensors
    """
    F3 = embed(F, 1.0)
    J = np.linalg.det(F3)
    green = 0.5 * (transpose(F3) @ F3 - I3)
    S = lam * np.trace(green, axis1=-2, axis2=-1)[..., None, None] * I3 + 2.0 * mu * green
    sigma = F3 @ S @ transpose(F3) / J[..., None, None]
    pressure = np.trace(sigma, axis1=-2, axis2=-1) / 3.0
    return sigma, pressure, sigma - pressure[..., None, None] * I3


def update_density(rho0: float, J: ArrayLike) -> ArrayLike:
    """Current density rho = rho0 / J."""
    J_arr = np.asarray(J, dtype=float)
    if np.any(J_arr <= 0.0):
        raise KinematicInversionError(f"J must be positive, got {np.min(J_arr)}")
    rho = rho0 / J_arr
    return float(rho) if np.ndim(rho) == 0 else rho


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(a (x) b)_iJkL = a_iJ b_kL."""
    return np.einsum("...ij,...kl->...ijkl", a, b)


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a_kJ b_iL arranged as iJkL."""
    return np.einsum("...kj,...il->...ijkl", a, b)


def deviatoric_piola(material: Material, F: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Deviatoric first Piola-Kirchhoff stress and its tangent.

    P_dev = J dev[sigma] F^-T, the pull-back of the Cauchy deviator, so
    that the integral of P_dev : grad_X w over the reference element equals
    the integral of dev[sigma] : grad_x w over the current one.

    Args:
        material: neo_hookean or svk material
        F: (..., 3, 3) deformation gradient

    Returns:
        (P, A) with A_iJkL = dP_iJ / dF_kL
    """
    mu = material.moduli.mu
    J = np.linalg.det(F)
    if np.any(J <= 0.0):
        raise KinematicInversionError(f"kinematic inversion: J = {np.min(J):.3e}")
    F_inv_T = transpose(np.linalg.inv(F))
    eye4 = np.einsum("ik,jl->ijkl", I3, I3)

    if material.kind == NEO_HOOKEAN:
        dev_sigma = neo_hookean_dev_stress(F @ transpose(F), J, mu)
        P = J[..., None, None] * dev_sigma @ F_inv_T
        I1 = np.einsum("...ij,...ij->...", F, F)[..., None, None, None, None]
        c = (mu * J ** (-2.0 / 3.0))[..., None, None, None, None]
        A = c * (
            eye4
            - 2.0 / 3.0 * _outer(F, F_inv_T)
            - 2.0 / 3.0 * _outer(F_inv_T, F)
            + 2.0 / 9.0 * I1 * _outer(F_inv_T, F_inv_T)
            + 1.0 / 3.0 * I1 * _cross(F_inv_T, F_inv_T)
        )
        return P, A

    if material.kind == SVK:
        lam = material.moduli.lam
        _, _, dev_sigma = svk_stress(F, mu, lam)
        P = J[..., None, None] * dev_sigma @ F_inv_T
        C = transpose(F) @ F
        b = F @ transpose(F)
        green = 0.5 * (C - I3)
        S = lam * np.trace(green, axis1=-2, axis2=-1)[..., None, None] * I3 + 2.0 * mu * green
        s = np.einsum("...ij,...ij->...", S, C)[..., None, None]
        ds = lam * np.trace(C, axis1=-2, axis2=-1)[..., None, None] * F + 2.0 * mu * F @ C + 2.0 * F @ S
        A_full = (
            np.einsum("ik,...lj->...ijkl", I3, S)
            + lam * _outer(F, F)
            + mu * np.einsum("...il,...kj->...ijkl", F, F)
            + mu * np.einsum("...ik,jl->...ijkl", b, I3)
        )
        A = A_full - _outer(F_inv_T, ds) / 3.0 + s[..., None, None] * _cross(F_inv_T, F_inv_T) / 3.0
        return P, A

    raise ValueError(f"deviatoric_piola needs a finite-strain material, got {material.kind}")


def pressure_piola(F: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pull-back of the pressure coupling: Q = J F^-T and dQ/dF.

    p Q : grad_X w integrates over the reference element to p div_x w over
    the current one.
    """
    J = np.linalg.det(F)
    F_inv_T = transpose(np.linalg.inv(F))
    Q = J[..., None, None] * F_inv_T
    dQ = J[..., None, None, None, None] * (_outer(F_inv_T, F_inv_T) - _cross(F_inv_T, F_inv_T))
    return Q, dQ
