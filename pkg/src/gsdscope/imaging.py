"""Effective PSF and GSD scan-image synthesis.

The depletion probability is a function of the ion's transverse position in
the beam frame only. Scan images are obtained by averaging it over the
ion's thermal Gaussian wave packet, either on an explicit 3D grid
(:func:`convolve_grid`), by Monte Carlo sampling (:func:`mc_convolve`) or on
a 2D grid over the wave packet's projection onto the transverse plane
(:func:`convolve_projected`). All three estimate the same integral.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .beam import BeamShape, BeamSpec, rabi_coefficient
from .dynamics import (
    DephasingVariant,
    Estimate,
    PulseSpec,
    dephasing_beta,
    thermal_excitation,
)
from .errors import AccuracyError, DomainError
from .geometry import (
    FrameSet,
    WavePacket,
    default_frames,
    k_projections,
    thermal_wavepacket,
    transverse_covariance,
)
from .units import CONSTANTS, ThermalState, TrapSpec

__all__ = [
    "GridSpec",
    "ScanSpec",
    "ImageGrid",
    "Profile",
    "EpsfMode",
    "ExcitationMap",
    "epsf_sigma",
    "epsf_profile",
    "convolve_grid",
    "convolve_projected",
    "mc_convolve",
    "scan_image",
    "profile_cut",
]

# Relative 1D weight below which grid planes are skipped. Dropped planes
# carry < 1e-15 of the total weight.
_WEIGHT_CUTOFF = 1e-17


@dataclass(frozen=True)
class GridSpec:
    points: int = 128
    extent: float = 1e-6

    def __post_init__(self):
        if int(self.points) != self.points or self.points < 8:
            raise DomainError("grid needs at least 8 points per axis")
        if not (self.extent > 0):
            raise DomainError("grid extent must be positive")

    @property
    def step(self) -> float:
        return self.extent / self.points

    @property
    def coords(self) -> np.ndarray:
        """Cell-center offsets, symmetric about zero."""
        return (np.arange(self.points) + 0.5) * self.step - 0.5 * self.extent

    @classmethod
    def publication(cls) -> "GridSpec":
        return cls(512, 1e-6)


@dataclass(frozen=True)
class ScanSpec:
    """Beam displacement along y_B (axis a) and ion displacement along z_t (axis b)."""

    a_start: float
    a_stop: float
    a_pixels: int
    b_start: float
    b_stop: float
    b_pixels: int

    def __post_init__(self):
        if self.a_pixels < 1 or self.b_pixels < 1:
            raise DomainError("pixel counts must be >= 1")
        vals = (self.a_start, self.a_stop, self.b_start, self.b_stop)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError("scan ranges must be finite")

    @property
    def a_coords(self) -> np.ndarray:
        return np.linspace(self.a_start, self.a_stop, self.a_pixels)

    @property
    def b_coords(self) -> np.ndarray:
        return np.linspace(self.b_start, self.b_stop, self.b_pixels)


@dataclass(eq=False)
class ImageGrid:
    """Depletion probabilities; ``values[j, i]`` is at ``(a_coords[i], b_coords[j])``."""

    values: np.ndarray
    a_coords: np.ndarray
    b_coords: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.a_coords = np.asarray(self.a_coords, dtype=float)
        self.b_coords = np.asarray(self.b_coords, dtype=float)
        if self.values.shape != (self.b_coords.size, self.a_coords.size):
            raise DomainError("image shape does not match its axes")
        if np.any(~np.isfinite(self.values)) or np.any(self.values < 0) or np.any(self.values > 1):
            raise DomainError("image values must lie in [0, 1]")


@dataclass(eq=False)
class Profile:
    coordinate: np.ndarray
    value: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        self.coordinate = np.asarray(self.coordinate, dtype=float)
        self.value = np.asarray(self.value, dtype=float)
        if self.coordinate.ndim != 1 or self.coordinate.shape != self.value.shape:
            raise DomainError("profile arrays must be 1D and of equal length")
        if self.coordinate.size < 2:
            raise DomainError("profile needs at least two points")
        d = np.diff(self.coordinate)
        if not (np.all(d > 0) or np.all(d < 0)):
            raise DomainError("profile coordinates must be strictly monotone")
        if self.sigma is not None:
            self.sigma = np.asarray(self.sigma, dtype=float)
            if self.sigma.shape != self.value.shape:
                raise DomainError("sigma must match the profile length")

    def __len__(self):
        return self.coordinate.size


class EpsfMode(enum.Enum):
    POINT_ION = "point_ion"
    THERMAL_CLOSED_FORM = "thermal_closed_form"


def epsf_sigma(w0, tau, P0, transition) -> float:
    """Width of the dark spot, ``sqrt(pi^3 hbar c / (3 lambda^3 Gamma)) w0^2 / (tau sqrt(P0))``.

    At this radius the quadratic (near-center) doughnut gives a Rabi phase
    ``Omega * tau`` of exactly one radian.
    """
    for name, v in (("w0", w0), ("tau", tau), ("P0", P0)):
        if not (v > 0):
            raise DomainError(f"{name} must be positive")
    lam = transition.wavelength
    pref = math.sqrt(math.pi**3 * CONSTANTS.hbar * CONSTANTS.c / (3.0 * lam**3 * transition.linewidth))
    return pref * w0 * w0 / (tau * math.sqrt(P0))


class ExcitationMap:
    """Depletion probability as a function of transverse beam-frame position.

    ``beta=0`` gives the coherent (point-ion) response.
    """

    def __init__(self, beam: BeamSpec, tau: float, beta=0.0, verbatim_phase=False):
        self.beam = beam
        self.tau = float(tau)
        self.beta = beta
        self.verbatim_phase = verbatim_phase
        w0 = beam.waist
        self._peak = 2.0 * beam.power / (math.pi * w0 * w0)
        self._two_over_w2 = 2.0 / (w0 * w0)
        self._coef = rabi_coefficient(beam.transition)
        self._vortex = beam.shape is BeamShape.VORTEX

    def omega_r2(self, r2):
        u = self._two_over_w2 * r2
        inten = self._peak * np.exp(-u)
        if self._vortex:
            inten = inten * u
        return np.sqrt(self._coef * inten)

    def at_r2(self, r2):
        return thermal_excitation(self.omega_r2(r2), self.tau, self.beta, self.verbatim_phase)

    def __call__(self, xb, yb):
        dx = np.asarray(xb) - self.beam.center[0]
        dy = np.asarray(yb) - self.beam.center[1]
        return self.at_r2(dx * dx + dy * dy)


def _beta_for(beam, trap, state, frames, variant):
    if trap is None or state is None:
        return 0.0
    kp = k_projections(frames, beam.transition.wavenumber)
    return dephasing_beta(trap, state, kp, variant)


def epsf_profile(beam: BeamSpec, pulse: PulseSpec, trap: TrapSpec | None = None,
                 state: ThermalState | None = None, mode=EpsfMode.THERMAL_CLOSED_FORM,
                 radii=None, frames: FrameSet | None = None,
                 variant=DephasingVariant.ETA_SQUARED, verbatim_phase=False) -> Profile:
    """Point-ion depletion probability versus distance from the beam axis.

    ``POINT_ION`` ignores the motional state. ``THERMAL_CLOSED_FORM`` applies
    the thermal dephasing of the given state (requires ``trap``/``state``).
    Default radii span ``[0, 1.5 w0]`` in 601 points.
    """
    mode = EpsfMode(mode)
    frames = frames or default_frames()
    if radii is None:
        radii = np.linspace(0.0, 1.5 * beam.waist, 601)
    radii = np.asarray(radii, dtype=float)
    if np.any(radii < 0):
        raise DomainError("radii must be non-negative")
    if mode is EpsfMode.POINT_ION:
        beta = 0.0
    else:
        if trap is None or state is None:
            raise DomainError("thermal ePSF needs a trap and a thermal state")
        beta = _beta_for(beam, trap, state, frames, variant)
    emap = ExcitationMap(beam, pulse.tau, beta, verbatim_phase)
    return Profile(radii, emap.at_r2(radii * radii))


# ----------------------------------------------------------- convolutions

def _check_grid(wp: WavePacket, grid: GridSpec):
    s = wp.sigmas
    if grid.step > s.min() / 4.0:
        raise AccuracyError(
            f"grid step {grid.step:.3e} m exceeds sigma_min/4 = {s.min() / 4:.3e} m"
        )
    if grid.extent < 8.0 * s.max():
        raise AccuracyError(
            f"grid extent {grid.extent:.3e} m is below 8 * sigma_max = {8 * s.max():.3e} m"
        )


def _grid_weights(wp, grid):
    c = grid.coords
    weights = []
    deficit = 1.0
    for s in wp.sigmas:
        g = np.exp(-0.5 * (c / s) ** 2) * grid.step / (math.sqrt(2.0 * math.pi) * s)
        deficit *= g.sum()
        weights.append(g)
    deficit = abs(1.0 - deficit)
    if deficit > 1e-3:
        raise AccuracyError(f"wave packet normalization deficit {deficit:.2e} on grid exceeds 1e-3")
    out = []
    for g in weights:
        g = g / g.sum()
        keep = np.nonzero(g >= _WEIGHT_CUTOFF * g.max())[0]
        out.append((c[keep], g[keep]))
    return out


def _transverse_offset(beam, wp, frames):
    """Transverse position of the wave-packet center relative to the beam axis."""
    t = frames.transverse_axes @ wp.center
    return t - np.asarray(beam.center)


def _grid_sum(emap, T0, M, weights, slab=8):
    (cx, wx), (cy, wy), (cz, wz) = weights
    wyz = np.multiply.outer(wy, wz)
    bx = T0[0] + M[0, 1] * cy[:, None] + M[0, 2] * cz[None, :]
    by = T0[1] + M[1, 1] * cy[:, None] + M[1, 2] * cz[None, :]
    total = 0.0
    for start in range(0, cx.size, slab):
        xs = cx[start:start + slab, None, None]
        xb = bx[None] + M[0, 0] * xs
        yb = by[None] + M[1, 0] * xs
        p = emap.at_r2(xb * xb + yb * yb)
        part = np.sum(p * wyz[None], axis=(1, 2))
        total += float(np.dot(wx[start:start + slab], part))
    return total


def _emap_for(beam, pulse, trap, state, frames, variant, mode, verbatim_phase):
    mode = EpsfMode(mode)
    beta = 0.0 if mode is EpsfMode.POINT_ION else _beta_for(beam, trap, state, frames, variant)
    return ExcitationMap(beam, pulse.tau, beta, verbatim_phase)


def convolve_grid(beam: BeamSpec, pulse: PulseSpec, trap: TrapSpec, state: ThermalState,
                  wp: WavePacket, grid: GridSpec = GridSpec(), frames: FrameSet | None = None,
                  variant=DephasingVariant.ETA_SQUARED, mode=EpsfMode.THERMAL_CLOSED_FORM,
                  verbatim_phase=False) -> float:
    """Depletion probability averaged over ``wp`` on a cubic grid.

    The grid is laid out along the trap axes and centered on the wave packet.
    The Gaussian weights are renormalized on the grid, and the sum runs over
    planes in index order, so the result does not depend on chunking.
    """
    frames = frames or default_frames()
    _check_grid(wp, grid)
    weights = _grid_weights(wp, grid)
    emap = _emap_for(beam, pulse, trap, state, frames, variant, mode, verbatim_phase)
    M = frames.transverse_axes @ frames.trap_to_lab
    return _grid_sum(emap, _transverse_offset(beam, wp, frames), M, weights)


def mc_convolve(beam: BeamSpec, pulse: PulseSpec, trap: TrapSpec, state: ThermalState,
                wp: WavePacket, frames: FrameSet | None = None, samples: int = 100_000,
                seed: int = 0, variant=DephasingVariant.ETA_SQUARED,
                mode=EpsfMode.THERMAL_CLOSED_FORM, verbatim_phase=False) -> Estimate:
    """Monte Carlo estimate of the wave-packet average, with its standard error."""
    if samples < 1000:
        raise DomainError("mc_convolve needs at least 1000 samples")
    frames = frames or default_frames()
    rng = np.random.default_rng(seed)
    emap = _emap_for(beam, pulse, trap, state, frames, variant, mode, verbatim_phase)
    offsets = rng.standard_normal((samples, 3)) * wp.sigmas
    M = frames.transverse_axes @ frames.trap_to_lab
    t = _transverse_offset(beam, wp, frames) + offsets @ M.T
    p = emap.at_r2(t[:, 0] ** 2 + t[:, 1] ** 2)
    return Estimate(float(p.mean()), float(p.std(ddof=1) / math.sqrt(samples)))


def convolve_projected(beam: BeamSpec, pulse: PulseSpec, trap: TrapSpec, state: ThermalState,
                       wp: WavePacket, frames: FrameSet | None = None, beam_offsets=None,
                       points: int = 96, span: float = 8.0,
                       variant=DephasingVariant.ETA_SQUARED, mode=EpsfMode.THERMAL_CLOSED_FORM,
                       verbatim_phase=False):
    """Wave-packet average using the 2D transverse marginal of the density.

    Because the excitation only depends on the transverse coordinates, the
    longitudinal integral of the Gaussian is done analytically; the remaining
    2D Gaussian is summed on a ``points x points`` grid spanning ``+-span``
    standard deviations along its principal axes.

    ``beam_offsets`` (m, 2) displaces the beam axis; the result then has
    shape (m,). Without offsets a float is returned.
    """
    frames = frames or default_frames()
    emap = _emap_for(beam, pulse, trap, state, frames, variant, mode, verbatim_phase)
    cov = transverse_covariance(wp, frames)
    evals, evecs = np.linalg.eigh(cov)
    u = ((np.arange(points) + 0.5) / points * 2.0 - 1.0) * span
    g = np.exp(-0.5 * u * u)
    g /= g.sum()
    sd = np.sqrt(np.maximum(evals, 0.0))
    U1, U2 = np.meshgrid(u * sd[0], u * sd[1], indexing="ij")
    W = np.multiply.outer(g, g).ravel()
    pts = evecs[:, 0, None] * U1.ravel() + evecs[:, 1, None] * U2.ravel()
    t0 = _transverse_offset(beam, wp, frames)
    scalar = beam_offsets is None
    offs = np.zeros((1, 2)) if scalar else np.atleast_2d(np.asarray(beam_offsets, dtype=float))
    xb = (t0[0] - offs[:, 0])[:, None] + pts[0][None, :]
    yb = (t0[1] - offs[:, 1])[:, None] + pts[1][None, :]
    vals = emap.at_r2(xb * xb + yb * yb) @ W
    return float(vals[0]) if scalar else vals


# ------------------------------------------------------------------ images

def _scan_directions(frames):
    a_dir = frames.transverse_axes @ frames.beam_to_lab[:, 1]
    b_dir = frames.trap_to_lab[:, 2]
    return a_dir, b_dir


def _provenance(scan, beam, pulse, trap, state, grid, frames, method, variant):
    return {
        "scan": {"a": [scan.a_start, scan.a_stop, scan.a_pixels],
                 "b": [scan.b_start, scan.b_stop, scan.b_pixels]},
        "beam": {"shape": beam.shape.value, "power": beam.power, "waist": beam.waist,
                 "center": list(beam.center)},
        "transition": {"wavelength": beam.transition.wavelength,
                       "linewidth": beam.transition.linewidth},
        "pulse": {"tau": pulse.tau},
        "trap": {"mass": trap.mass, "omega_x": trap.omega_x, "omega_y": trap.omega_y,
                 "omega_z": trap.omega_z},
        "state": {"nbar_x": state.nbar_x, "nbar_y": state.nbar_y, "nbar_z": state.nbar_z},
        "grid": {"points": grid.points, "extent": grid.extent},
        "frames": {"trap_to_lab": frames.trap_to_lab.tolist(),
                   "beam_to_lab": frames.beam_to_lab.tolist(),
                   "propagation_axis": frames.propagation_axis},
        "method": method,
        "variant": DephasingVariant(variant).value,
    }


def scan_image(scan: ScanSpec, beam: BeamSpec, pulse: PulseSpec, trap: TrapSpec,
               state: ThermalState, grid: GridSpec = GridSpec(), frames: FrameSet | None = None,
               variant=DephasingVariant.ETA_SQUARED, method: str = "grid",
               wavepacket: WavePacket | None = None) -> ImageGrid:
    """Simulate a 2D GSD scan.

    For every pixel the beam axis is displaced by ``a`` along y_B and the
    wave packet by ``b`` along z_t, then the excitation is averaged over the
    wave packet. ``method`` is ``"grid"`` (3D grid, the reference) or
    ``"projected"`` (2D marginal, much faster). ``wavepacket`` overrides the
    thermal widths derived from ``trap``/``state``; its center is the
    unscanned ion position.
    """
    frames = frames or default_frames()
    wp0 = wavepacket if wavepacket is not None else thermal_wavepacket(trap, state)
    a_dir, b_dir = _scan_directions(frames)
    a, b = scan.a_coords, scan.b_coords
    values = np.empty((b.size, a.size))
    if method == "grid":
        _check_grid(wp0, grid)
        weights = _grid_weights(wp0, grid)
        emap = _emap_for(beam, pulse, trap, state, frames, variant,
                         EpsfMode.THERMAL_CLOSED_FORM, False)
        M = frames.transverse_axes @ frames.trap_to_lab
        for j, bj in enumerate(b):
            wp = wp0.moved(wp0.center + bj * b_dir)
            t_ion = _transverse_offset(beam, wp, frames)
            for i, ai in enumerate(a):
                values[j, i] = _grid_sum(emap, t_ion - ai * a_dir, M, weights)
    elif method == "projected":
        offsets = np.outer(a, a_dir)
        for j, bj in enumerate(b):
            wp = wp0.moved(wp0.center + bj * b_dir)
            values[j] = convolve_projected(beam, pulse, trap, state, wp, frames,
                                           beam_offsets=offsets, variant=variant)
    else:
        raise DomainError(f"unknown method {method!r}")
    np.clip(values, 0.0, 1.0, out=values)
    prov = _provenance(scan, beam, pulse, trap, state, grid, frames, method, variant)
    if wavepacket is not None:
        prov["wavepacket"] = {"sigmas": wp0.sigmas.tolist(), "center": wp0.center.tolist()}
    return ImageGrid(values, a, b, prov)


def profile_cut(image: ImageGrid, rows) -> Profile:
    """Average the listed rows; ``sigma`` is the standard error over rows."""
    rows = list(rows)
    if not rows:
        raise DomainError("row list is empty")
    n = image.values.shape[0]
    for r in rows:
        if not (-n <= r < n):
            raise DomainError(f"row index {r} out of range for {n} rows")
    block = image.values[rows]
    mean = block.mean(axis=0)
    sigma = block.std(axis=0, ddof=1) / math.sqrt(len(rows)) if len(rows) >= 2 else None
    return Profile(image.a_coords, mean, sigma)


def middle_rows(image: ImageGrid, count: int = 3):
    n = image.values.shape[0]
    start = max(0, (n - count) // 2)
    return list(range(start, min(n, start + count)))
