"""Two-level depletion dynamics, thermal dephasing and sideband thermometry.

``omega`` is always the on-resonance Rabi frequency, so a resonant square
pulse of length ``tau`` leaves the ion in D with probability
``sin^2(omega * tau / 2)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import AccuracyError, DomainError
from .units import CONSTANTS, ThermalState, TrapSpec

__all__ = [
    "PulseSpec",
    "DephasingVariant",
    "DephasingBeta",
    "coherent_excitation",
    "lamb_dicke",
    "dephasing_beta",
    "thermal_excitation",
    "thermal_excitation_fock_oracle",
    "fock_cutoff",
    "sideband_excitation_ratio",
    "nbar_from_sideband_ratio",
    "Estimate",
]


@dataclass(frozen=True)
class PulseSpec:
    tau: float

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise DomainError(f"pulse duration must be > 0, got {self.tau!r}")


class DephasingVariant(enum.Enum):
    ETA_SQUARED = "eta_squared"
    PAPER_VERBATIM = "paper_verbatim"


@dataclass(frozen=True)
class DephasingBeta:
    beta: float
    per_mode: tuple
    variant: DephasingVariant = DephasingVariant.ETA_SQUARED

    def __post_init__(self):
        if self.beta < 0:
            raise DomainError("beta must be non-negative")


def coherent_excitation(omega, tau):
    """Resonant Rabi flop, ``sin^2(omega tau / 2)``."""
    return np.sin(0.5 * np.asarray(omega, dtype=float) * tau) ** 2


def lamb_dicke(k_eff, mass, omega_mode):
    """``k_eff * sqrt(hbar / (2 m omega))`` for one motional mode."""
    for name, v in (("k_eff", k_eff), ("mass", mass), ("omega_mode", omega_mode)):
        if np.any(np.asarray(v) <= 0):
            raise DomainError(f"{name} must be positive")
    return k_eff * np.sqrt(CONSTANTS.hbar / (2.0 * mass * omega_mode))


def _etas(trap, k_projections):
    k = np.asarray(k_projections, dtype=float)
    etas = np.zeros(3)
    for i, (ki, wi) in enumerate(zip(k, trap.omegas)):
        if ki > 0:
            etas[i] = lamb_dicke(ki, trap.mass, wi)
    return etas


def dephasing_beta(trap: TrapSpec, state: ThermalState, k_projections,
                   variant=DephasingVariant.ETA_SQUARED) -> DephasingBeta:
    """Carrier dephasing parameter summed over the three trap modes.

    ``ETA_SQUARED`` (default) sums eta_i^2 nbar_i, which is what averaging
    Omega (1 - eta^2 n) over a thermal distribution produces.
    ``PAPER_VERBATIM`` sums eta_i nbar_i.
    """
    variant = DephasingVariant(variant)
    etas = _etas(trap, k_projections)
    if variant is DephasingVariant.ETA_SQUARED:
        per_mode = etas**2 * state.nbars
    else:
        per_mode = etas * state.nbars
    return DephasingBeta(float(per_mode.sum()), tuple(float(v) for v in per_mode), variant)


def thermal_excitation(omega, tau, beta, verbatim_phase=False):
    """Thermally dephased excitation probability.

    ``0.5 * (1 - (cos(phi) + phi b sin(phi)) / (1 + (phi b)^2))`` with
    ``phi = omega * tau``, which equals :func:`coherent_excitation` at
    ``b = 0``. ``verbatim_phase=True`` uses ``phi = 2 omega tau`` instead.
    ``beta`` may be a :class:`DephasingBeta` or a plain float.
    """
    b = beta.beta if isinstance(beta, DephasingBeta) else float(beta)
    if b < 0:
        raise DomainError("beta must be non-negative")
    phi = np.asarray(omega, dtype=float) * tau
    if verbatim_phase:
        phi = 2.0 * phi
    if b == 0.0:
        return np.sin(0.5 * phi) ** 2
    x = phi * b
    return 0.5 * (1.0 - (np.cos(phi) + x * np.sin(phi)) / (1.0 + x * x))


def fock_cutoff(nbar, tol=1e-9):
    """Smallest ``n_max`` whose thermal tail weight is below ``tol``."""
    if nbar <= 0:
        return 0
    q = nbar / (nbar + 1.0)
    # tail above n_max is q**(n_max + 1)
    return max(0, int(math.ceil(math.log(tol) / math.log(q))) - 1)


def _thermal_weights(nbar, n_max):
    n = np.arange(n_max + 1)
    if nbar == 0:
        w = np.zeros(n_max + 1)
        w[0] = 1.0
        return w
    return (nbar / (nbar + 1.0)) ** n / (nbar + 1.0)


def thermal_excitation_fock_oracle(omega, tau, trap: TrapSpec, state: ThermalState,
                                   k_projections, n_max=None, tol=1e-9):
    """Brute-force thermal average of ``sin^2(Omega_n tau / 2)`` over Fock states.

    ``Omega_n = Omega * prod_i (1 - eta_i^2 n_i)`` to first Lamb-Dicke order,
    with independent geometric (thermal) distributions per mode. With
    ``n_max=None`` the cutoff is chosen per mode so the discarded weight is
    below ``tol``; an explicit ``n_max`` that truncates more weight raises
    :class:`AccuracyError`.
    """
    etas = _etas(trap, k_projections)
    nbars = state.nbars
    factors, weights = [], []
    for eta, nbar in zip(etas, nbars):
        if nbar == 0.0 or (eta == 0.0 and n_max is None):
            factors.append(np.ones(1))
            weights.append(np.ones(1))
            continue
        cut = fock_cutoff(nbar, tol / 3.0) if n_max is None else int(n_max)
        w = _thermal_weights(nbar, cut)
        if w.sum() < 1.0 - tol / 3.0:
            raise AccuracyError(
                f"n_max={cut} keeps thermal weight {w.sum():.12f} for nbar={nbar}; "
                f"need > {1 - tol / 3:.12f}"
            )
        factors.append(1.0 - eta**2 * np.arange(cut + 1))
        weights.append(w)
    phase = 0.5 * float(omega) * tau
    fyz = np.multiply.outer(factors[1], factors[2])
    wyz = np.multiply.outer(weights[1], weights[2])
    total = 0.0
    for fx, wx in zip(factors[0], weights[0]):
        if wx == 0.0:
            continue
        total += wx * float(np.sum(wyz * np.sin(phase * fx * fyz) ** 2))
    return total / (weights[0].sum() * wyz.sum())


def sideband_excitation_ratio(nbar):
    """Red-to-blue sideband excitation ratio ``nbar / (nbar + 1)``."""
    nbar = np.asarray(nbar, dtype=float)
    if np.any(nbar < 0):
        raise DomainError("nbar must be non-negative")
    return nbar / (nbar + 1.0)


class Estimate(NamedTuple):
    value: float
    error: float


def nbar_from_sideband_ratio(p_rsb, p_bsb, shots_rsb=None, shots_bsb=None,
                             sigma_rsb=None, sigma_bsb=None) -> Estimate:
    """Mean phonon number from red/blue sideband excitations.

    Uncertainties are propagated from ``sigma_*`` when given, otherwise from
    binomial errors when shot counts are supplied; else the error is 0.
    """
    p_rsb, p_bsb = float(p_rsb), float(p_bsb)
    if not (0.0 < p_bsb <= 1.0):
        raise DomainError(f"blue sideband excitation must lie in (0, 1], got {p_bsb}")
    if not (0.0 <= p_rsb < p_bsb):
        raise DomainError(
            f"red sideband excitation {p_rsb} must lie in [0, p_bsb={p_bsb}); "
            "a ratio >= 1 has no thermal solution"
        )
    ratio = p_rsb / p_bsb
    nbar = ratio / (1.0 - ratio)

    if sigma_rsb is None and shots_rsb:
        sigma_rsb = math.sqrt(p_rsb * (1 - p_rsb) / shots_rsb)
    if sigma_bsb is None and shots_bsb:
        sigma_bsb = math.sqrt(p_bsb * (1 - p_bsb) / shots_bsb)
    sigma_rsb = sigma_rsb or 0.0
    sigma_bsb = sigma_bsb or 0.0
    sigma_ratio = math.hypot(sigma_rsb / p_bsb, ratio * sigma_bsb / p_bsb)
    return Estimate(nbar, sigma_ratio / (1.0 - ratio) ** 2)
