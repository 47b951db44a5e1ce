"""
Timestepping - Solution state and BDF stencils for the second time derivative.

    BDF1: u_tt = (u^{n+1} - 2 u^n + u^{n-1}) / dt^2
    BDF2: u_tt = (2 u^{n+1} - 5 u^n + 4 u^{n-1} - u^{n-2}) / dt^2

BDF2 needs three history levels; the first step of a BDF2 run is taken
with BDF1.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from vms_solid.errors import AssemblyError

logger = logging.getLogger(__name__)

STATIC = "static"
BDF1 = "bdf1"
BDF2 = "bdf2"
SCHEMES = (STATIC, BDF1, BDF2)

BDF_STENCILS = {
    BDF1: (1.0, -2.0, 1.0),
    BDF2: (2.0, -5.0, 4.0, -1.0),
}

# History levels (u^n, u^{n-1}, ...) a scheme reads.
REQUIRED_LEVELS = {STATIC: 0, BDF1: 2, BDF2: 3}


@dataclass
class State:
    """
    Nodal solution with its displacement history.

    u is the newest level (the Newton iterate while a step is running,
    u^{n+1} once it converged); u_n, u_nm1, u_nm2 are earlier levels.
    ``levels`` counts how many of (u_n, u_nm1, u_nm2) are meaningful.
    volumetric_defect is the per-element sum of the step-wise constraint
    defects div(du) - mean(dp)/K of finite-strain runs (None until the
    first finite-strain step).
    """
    u: np.ndarray
    u_n: np.ndarray
    u_nm1: np.ndarray
    u_nm2: np.ndarray
    p: np.ndarray
    p_n: np.ndarray
    density: np.ndarray
    t: float = 0.0
    step: int = 0
    levels: int = 2
    newton_trace: List[float] = field(default_factory=list)
    stretch_defect: float = 0.0
    volumetric_defect: Optional[np.ndarray] = None

    @classmethod
    def initial(
        cls,
        n_nodes: int,
        dim: int,
        density: np.ndarray,
        velocity: Optional[np.ndarray] = None,
        dt: Optional[float] = None,
    ) -> "State":
        """
        Stress-free state at rest, or moving with a nodal initial velocity.

        The velocity is seeded into the history as u^{-1} = -v0 dt, so the
        first backward difference reproduces v0.
        """
        zeros = np.zeros((n_nodes, dim))
        previous = zeros.copy()
        if velocity is not None:
            if dt is None:
                raise ValueError("seeding an initial velocity needs dt")
            previous = -np.asarray(velocity, dtype=float) * dt
        return cls(
            u=zeros.copy(),
            u_n=zeros.copy(),
            u_nm1=previous,
            u_nm2=zeros.copy(),
            p=np.zeros(n_nodes),
            p_n=np.zeros(n_nodes),
            density=np.array(density, dtype=float),
        )

    def trial(self, t: float) -> "State":
        """Copy used as Newton iterate for the step ending at t."""
        return replace(
            self,
            u=self.u_n.copy(),
            p=self.p_n.copy(),
            t=t,
            newton_trace=[],
        )

    def advanced(
        self,
        u: np.ndarray,
        p: np.ndarray,
        t: float,
        density: np.ndarray,
        newton_trace: List[float],
        stretch_defect: float = 0.0,
        volumetric_defect: Optional[np.ndarray] = None,
    ) -> "State":
        """Converged step: rotate the history and store the new level."""
        return State(
            u=u.copy(),
            u_n=u.copy(),
            u_nm1=self.u_n.copy(),
            u_nm2=self.u_nm1.copy(),
            p=p.copy(),
            p_n=p.copy(),
            density=np.array(density, dtype=float),
            t=t,
            step=self.step + 1,
            levels=min(self.levels + 1, 3),
            newton_trace=list(newton_trace),
            stretch_defect=stretch_defect,
            volumetric_defect=volumetric_defect,
        )

    def velocity(self, dt: float) -> np.ndarray:
        """First backward difference (u^n - u^{n-1}) / dt."""
        return (self.u_n - self.u_nm1) / dt


def effective_scheme(scheme: str, levels: int) -> str:
    """Scheme to use given the available history (BDF2 falls back to BDF1)."""
    if scheme == BDF2 and levels < REQUIRED_LEVELS[BDF2]:
        return BDF1
    return scheme


def bdf_leading_coefficient(scheme: str, dt: float) -> float:
    """d u_tt / d u^{n+1}."""
    if scheme == STATIC:
        return 0.0
    return BDF_STENCILS[scheme][0] / dt ** 2


def bdf_acceleration(state: State, dt: float, scheme: str) -> np.ndarray:
    """
    Nodal acceleration from the BDF stencil.

    Args:
        state: State with u as the newest level
        dt: Time step
        scheme: "bdf1", "bdf2" (or "static", which gives zero)

    Returns:
        (N, d) u_tt

    Raises:
        AssemblyError: if the history required by the scheme is missing
    """
    if scheme == STATIC:
        return np.zeros_like(state.u)
    if scheme not in BDF_STENCILS:
        raise AssemblyError(f"Unknown time scheme: {scheme}")
    if not dt > 0.0:
        raise AssemblyError(f"dt must be positive, got {dt}")
    if state.levels < REQUIRED_LEVELS[scheme]:
        raise AssemblyError(
            f"insufficient history for {scheme}: {state.levels} levels, {REQUIRED_LEVELS[scheme]} needed"
        )

    stencil = BDF_STENCILS[scheme]
    history = (state.u, state.u_n, state.u_nm1, state.u_nm2)
    acceleration = np.zeros_like(state.u)
    for weight, level in zip(stencil, history):
        acceleration = acceleration + weight * level
    return acceleration / dt ** 2
