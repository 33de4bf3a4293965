"""Thermal wave packets and the lab / trap / beam coordinate frames.

Frames are stored as rotation matrices whose *columns* are the frame's unit
axes written in lab coordinates, so ``p_lab = R @ p_frame``.

Default frames::

    trap:  x_t = (x + y)/sqrt2,  y_t = (y - x)/sqrt2,  z_t = z
    beam:  x_B = (x + z)/sqrt2,  y_B = y,              z_B = (z - x)/sqrt2

The beam propagates along ``z_B``; ``(x_B, y_B)`` is its transverse plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .units import CONSTANTS, ThermalState, TrapSpec

__all__ = [
    "FrameSet",
    "default_frames",
    "WavePacket",
    "ground_state_width",
    "thermal_width",
    "nbar_for_width",
    "thermal_wavepacket",
    "density",
    "trap_to_lab",
    "lab_to_trap",
    "beam_transverse_coords",
    "k_projections",
    "transverse_covariance",
]

_S = 1.0 / math.sqrt(2.0)

DEFAULT_TRAP_TO_LAB = np.array([
    [_S, -_S, 0.0],
    [_S, _S, 0.0],
    [0.0, 0.0, 1.0],
])
DEFAULT_BEAM_TO_LAB = np.array([
    [_S, 0.0, -_S],
    [0.0, 1.0, 0.0],
    [_S, 0.0, _S],
])


def _check_rotation(name, R, tol=1e-12):
    R = np.array(R, dtype=float)
    if R.shape != (3, 3):
        raise DomainError(f"{name} must be 3x3, got shape {R.shape}")
    if not np.allclose(R.T @ R, np.eye(3), atol=tol, rtol=0):
        raise DomainError(f"{name} is not orthogonal")
    if abs(np.linalg.det(R) - 1.0) > tol:
        raise DomainError(f"{name} is not a proper rotation (det != +1)")
    R.setflags(write=False)
    return R


@dataclass(frozen=True, eq=False)
class FrameSet:
    """Trap and beam frames relative to the lab.

    ``propagation_axis`` selects which beam axis (0, 1 or 2) is the
    propagation direction; the other two, in order, span the transverse plane.
    """

    trap_to_lab: np.ndarray = field(default_factory=lambda: DEFAULT_TRAP_TO_LAB.copy())
    beam_to_lab: np.ndarray = field(default_factory=lambda: DEFAULT_BEAM_TO_LAB.copy())
    propagation_axis: int = 2

    def __post_init__(self):
        object.__setattr__(self, "trap_to_lab", _check_rotation("trap_to_lab", self.trap_to_lab))
        object.__setattr__(self, "beam_to_lab", _check_rotation("beam_to_lab", self.beam_to_lab))
        if self.propagation_axis not in (0, 1, 2):
            raise DomainError("propagation_axis must be 0, 1 or 2")

    @property
    def transverse_axes(self) -> np.ndarray:
        """2x3 matrix whose rows are the transverse beam axes in lab coordinates."""
        idx = [i for i in range(3) if i != self.propagation_axis]
        return self.beam_to_lab[:, idx].T

    @property
    def k_hat(self) -> np.ndarray:
        return self.beam_to_lab[:, self.propagation_axis]

    def rotated(self, R) -> "FrameSet":
        """Both frames rotated by the lab rotation ``R``."""
        R = np.asarray(R, dtype=float)
        return FrameSet(R @ self.trap_to_lab, R @ self.beam_to_lab, self.propagation_axis)


def default_frames() -> FrameSet:
    return FrameSet()


# ----------------------------------------------------------------- widths

def ground_state_width(mass, omega):
    """Ground-state size ``sqrt(hbar / (m omega))`` (m)."""
    if np.any(np.asarray(mass) <= 0) or np.any(np.asarray(omega) <= 0):
        raise DomainError("mass and omega must be positive")
    return np.sqrt(CONSTANTS.hbar / (mass * np.asarray(omega, dtype=float)))


def thermal_width(sigma0, nbar):
    """Thermal Gaussian width ``sigma0 * sqrt(2 nbar + 1)``."""
    if np.any(np.asarray(sigma0) <= 0):
        raise DomainError("sigma0 must be positive")
    if np.any(np.asarray(nbar) < 0):
        raise DomainError("nbar must be non-negative")
    return sigma0 * np.sqrt(2.0 * np.asarray(nbar, dtype=float) + 1.0)


def nbar_for_width(sigma, sigma0):
    """Inverse of :func:`thermal_width`; ``sigma`` must be >= ``sigma0``."""
    nbar = 0.5 * ((np.asarray(sigma, dtype=float) / sigma0) ** 2 - 1.0)
    if np.any(nbar < -1e-12):
        raise DomainError("width is below the ground-state width")
    return np.maximum(nbar, 0.0)


@dataclass(frozen=True, eq=False)
class WavePacket:
    """Gaussian position density; widths along trap axes, center in lab frame."""

    sigma_x: float
    sigma_y: float
    sigma_z: float
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        for name in ("sigma_x", "sigma_y", "sigma_z"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive, got {v!r}")
            object.__setattr__(self, name, v)
        c = np.array(self.center, dtype=float).reshape(3)
        c.setflags(write=False)
        object.__setattr__(self, "center", c)

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([self.sigma_x, self.sigma_y, self.sigma_z])

    def moved(self, center) -> "WavePacket":
        return WavePacket(self.sigma_x, self.sigma_y, self.sigma_z, center)


def thermal_wavepacket(trap: TrapSpec, state: ThermalState, center=(0.0, 0.0, 0.0)) -> WavePacket:
    sig = thermal_width(ground_state_width(trap.mass, trap.omegas), state.nbars)
    return WavePacket(*sig, center=center)


# ------------------------------------------------------------------ frames

def lab_to_trap(frames: FrameSet, point_lab):
    return np.asarray(point_lab, dtype=float) @ frames.trap_to_lab


def trap_to_lab(frames: FrameSet, point_trap):
    return np.asarray(point_trap, dtype=float) @ frames.trap_to_lab.T


def density(wp: WavePacket, frames: FrameSet, point_lab):
    """Gaussian probability density (1/m^3) at lab point(s) ``(..., 3)``."""
    d = lab_to_trap(frames, np.asarray(point_lab, dtype=float) - wp.center)
    s = wp.sigmas
    norm = (2.0 * math.pi) ** 1.5 * s.prod()
    return np.exp(-0.5 * np.sum((d / s) ** 2, axis=-1)) / norm


def beam_transverse_coords(frames: FrameSet, point_lab):
    """Components ``(..., 2)`` of lab point(s) along the transverse beam axes."""
    return np.asarray(point_lab, dtype=float) @ frames.transverse_axes.T


def k_projections(frames: FrameSet, k):
    """Magnitudes of the beam wavevector projected on the trap axes."""
    if k <= 0:
        raise DomainError("k must be positive")
    return k * np.abs(frames.k_hat @ frames.trap_to_lab)


def transverse_covariance(wp: WavePacket, frames: FrameSet):
    """2x2 covariance of the wave packet projected onto the beam transverse plane."""
    M = frames.transverse_axes @ frames.trap_to_lab
    return (M * wp.sigmas**2) @ M.T
