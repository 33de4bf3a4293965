"""Transverse intensity of the depletion beam and the intensity-to-Rabi map.

Two beam shapes are modelled, the first-order Laguerre-Gauss doughnut
(``VORTEX``, l = -1) and a plain Gaussian. Profiles are purely transverse;
the beam is taken as constant along propagation over the wave-packet scale.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError
from .units import CONSTANTS, TransitionSpec, default_transition

__all__ = [
    "BeamShape",
    "BeamSpec",
    "lg01_intensity",
    "gaussian_intensity",
    "near_center_intensity",
    "intensity",
    "rabi_frequency",
    "rabi_coefficient",
    "rabi_at",
]


class BeamShape(enum.Enum):
    VORTEX = "vortex"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class BeamSpec:
    """Depletion beam.

    ``center`` is the beam axis position (m) in the (x_B, y_B) transverse
    plane. Orbital angular momentum and polarization only matter for the
    error budget and are kept as metadata.
    """

    shape: BeamShape
    power: float
    waist: float
    transition: TransitionSpec = field(default_factory=default_transition)
    center: tuple = (0.0, 0.0)
    orbital_l: int = -1
    polarization: int = -1

    def __post_init__(self):
        shape = self.shape
        if isinstance(shape, str):
            shape = BeamShape(shape.lower())
        object.__setattr__(self, "shape", shape)
        if not (math.isfinite(self.power) and self.power >= 0):
            raise DomainError(f"beam power must be >= 0, got {self.power!r}")
        if not (math.isfinite(self.waist) and self.waist > 0):
            raise DomainError(f"beam waist must be > 0, got {self.waist!r}")
        center = tuple(float(c) for c in self.center)
        if len(center) != 2:
            raise DomainError("beam center must be a 2-vector")
        object.__setattr__(self, "center", center)

    def shifted(self, d) -> "BeamSpec":
        return replace(self, center=(self.center[0] + d[0], self.center[1] + d[1]))

    def with_power(self, power) -> "BeamSpec":
        return replace(self, power=float(power))


def _radius(r):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("radius must be non-negative")
    return r


def _check_shape(beam, shape):
    if beam.shape is not shape:
        raise DomainError(f"expected a {shape.value} beam, got {beam.shape.value}")


def lg01_intensity(r, beam: BeamSpec):
    """Normalized l = +-1 Laguerre-Gauss intensity (W/m^2) at radius ``r``."""
    _check_shape(beam, BeamShape.VORTEX)
    r = _radius(r)
    w0 = beam.waist
    u = 2.0 * r * r / (w0 * w0)
    return 2.0 * beam.power / (math.pi * w0 * w0) * u * np.exp(-u)


def gaussian_intensity(r, beam: BeamSpec):
    _check_shape(beam, BeamShape.GAUSSIAN)
    r = _radius(r)
    w0 = beam.waist
    return 2.0 * beam.power / (math.pi * w0 * w0) * np.exp(-2.0 * r * r / (w0 * w0))


def near_center_intensity(r, beam: BeamSpec):
    """Quadratic small-radius limit of the doughnut, 4 r^2 P0 / (pi w0^4)."""
    _check_shape(beam, BeamShape.VORTEX)
    r = _radius(r)
    return 4.0 * r * r * beam.power / (math.pi * beam.waist**4)


def intensity(r, beam: BeamSpec):
    if beam.shape is BeamShape.VORTEX:
        return lg01_intensity(r, beam)
    return gaussian_intensity(r, beam)


def rabi_coefficient(transition: TransitionSpec) -> float:
    """Factor ``3 lambda^3 Gamma / (4 pi^2 hbar c)`` so that Omega^2 = factor * I."""
    lam = transition.wavelength
    return 3.0 * lam**3 * transition.linewidth / (4.0 * math.pi**2 * CONSTANTS.hbar * CONSTANTS.c)


def rabi_frequency(I, transition: TransitionSpec):
    """On-resonance Rabi frequency (rad/s) at intensity ``I`` (W/m^2)."""
    I = np.asarray(I, dtype=float)
    if np.any(I < 0):
        raise DomainError("intensity must be non-negative")
    return np.sqrt(I * rabi_coefficient(transition))


def rabi_at(point, beam: BeamSpec):
    """Rabi frequency at transverse ``point`` (..., 2) in the beam frame."""
    p = np.asarray(point, dtype=float)
    r = np.hypot(p[..., 0] - beam.center[0], p[..., 1] - beam.center[1])
    return rabi_frequency(intensity(r, beam), beam.transition)
