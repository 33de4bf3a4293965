"""Physical constants, quantity parsing and the basic parameter records.

Everything inside the package is strictly SI. Human-facing strings such as
``"4.2um"`` or ``"2pi*760kHz"`` are converted here and nowhere else.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from scipy import constants as _sc

from .errors import DomainError, QuantityParseError

__all__ = [
    "PhysicalConstants",
    "CONSTANTS",
    "default_constants",
    "Quantity",
    "parse_quantity",
    "format_quantity",
    "gamma_from_lifetime",
    "TransitionSpec",
    "TrapSpec",
    "ThermalState",
    "default_transition",
    "default_trap",
    "doppler_state",
]


def _require_positive(name, value):
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise DomainError(f"{name} must be a positive finite number, got {value!r}")
    return value


def _require_nonnegative(name, value):
    value = float(value)
    if not math.isfinite(value) or value < 0.0:
        raise DomainError(f"{name} must be a non-negative finite number, got {value!r}")
    return value


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float
    c: float
    atomic_mass_unit: float
    euler: float

    def __post_init__(self):
        for name in ("hbar", "c", "atomic_mass_unit", "euler"):
            _require_positive(name, getattr(self, name))


def default_constants() -> PhysicalConstants:
    """CODATA values (via scipy) together with Euler's number."""
    return PhysicalConstants(
        hbar=_sc.hbar, c=_sc.c, atomic_mass_unit=_sc.atomic_mass, euler=math.e
    )


CONSTANTS = default_constants()


# ---------------------------------------------------------------- quantities

UNITS = ("m", "s", "W", "Hz", "rad/s", "")
_PREFIXES = {"n": 1e-9, "u": 1e-6, "µ": 1e-6, "μ": 1e-6, "m": 1e-3, "k": 1e3, "M": 1e6}
_FORMAT_PREFIXES = (("M", 1e6), ("k", 1e3), ("", 1.0), ("m", 1e-3), ("u", 1e-6), ("n", 1e-9))

_QUANTITY_RE = re.compile(
    r"""^\s*
    (?P<twopi>2\s*\*?\s*(?:pi|π)\s*\*\s*)?
    (?P<number>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)
    \s*
    (?P<unit>[^\s]*)
    \s*$""",
    re.VERBOSE,
)


@dataclass(frozen=True)
class Quantity:
    """A value in base SI units together with its unit symbol.

    The empty unit ``""`` means dimensionless.
    """

    value: float
    unit: str

    def __post_init__(self):
        if self.unit not in UNITS:
            raise QuantityParseError(f"unsupported unit {self.unit!r}", self.unit)

    def __float__(self):
        return float(self.value)


def _split_unit(token):
    if token in UNITS:
        return 1.0, token
    if token and token[0] in _PREFIXES and token[1:] in UNITS and token[1:]:
        return _PREFIXES[token[0]], token[1:]
    raise QuantityParseError(f"unknown unit {token!r}", token)


def parse_quantity(text: str, unit: str | None = None) -> Quantity:
    """Parse ``"<number>[ ]<prefixed unit>"`` into base SI units.

    A leading ``2pi*`` is accepted in front of a frequency in Hz and turns it
    into an angular frequency in rad/s. When ``unit`` is given the parsed
    unit must match it.

    >>> parse_quantity("4.2um")
    Quantity(value=4.2e-06, unit='m')
    """
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        if unit not in (None, ""):
            raise QuantityParseError(f"missing unit suffix, expected {unit!r}", str(text))
        return Quantity(float(text), "")
    if not isinstance(text, str):
        raise QuantityParseError(f"cannot parse {text!r} as a quantity", repr(text))
    match = _QUANTITY_RE.match(text)
    if match is None:
        token = text.strip().split()[0] if text.strip() else text
        raise QuantityParseError(f"malformed quantity {text!r}", token)
    scale, base = _split_unit(match.group("unit"))
    value = float(match.group("number")) * scale
    if match.group("twopi"):
        if base != "Hz":
            raise QuantityParseError(
                f"'2pi*' is only valid in front of a Hz value in {text!r}",
                match.group("twopi").strip(),
            )
        value *= 2.0 * math.pi
        base = "rad/s"
    if unit is not None and base != unit:
        token = match.group("unit") or match.group("number")
        if base == "":
            raise QuantityParseError(
                f"missing unit suffix in {text!r}, expected {unit!r}", token
            )
        raise QuantityParseError(
            f"unit {match.group('unit')!r} in {text!r} is not compatible with {unit!r}", token
        )
    return Quantity(value, base)


def format_quantity(q: Quantity) -> str:
    """Format with the SI prefix that keeps the mantissa in [1, 1000)."""
    if q.unit == "":
        return repr(float(q.value))
    value = float(q.value)
    prefix, scale = "", 1.0
    if value != 0.0:
        for prefix, scale in _FORMAT_PREFIXES:
            if abs(value) >= scale:
                break
    return f"{value / scale!r}{prefix}{q.unit}"


# ------------------------------------------------------------------ records

def gamma_from_lifetime(lifetime: float) -> float:
    """Natural linewidth in Hz, ``1/(2*pi*lifetime)``.

    This is the convention used for the decay-rate symbol throughout the
    package; with it the resolution formula reproduces its quoted ~75 nm
    prefactor for the 729 nm transition.
    """
    lifetime = _require_positive("lifetime", lifetime)
    return 1.0 / (2.0 * math.pi * lifetime)


@dataclass(frozen=True)
class TransitionSpec:
    """Depletion transition: wavelength (m) and natural linewidth (Hz)."""

    wavelength: float = 729e-9
    linewidth: float = 1.0 / (2.0 * math.pi * 1.168)

    def __post_init__(self):
        object.__setattr__(self, "wavelength", _require_positive("wavelength", self.wavelength))
        object.__setattr__(self, "linewidth", _require_positive("linewidth", self.linewidth))

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.wavelength

    @classmethod
    def from_lifetime(cls, wavelength: float, lifetime: float) -> "TransitionSpec":
        return cls(wavelength=wavelength, linewidth=gamma_from_lifetime(lifetime))


@dataclass(frozen=True)
class TrapSpec:
    """Ion mass (kg) and secular angular frequencies (rad/s) along trap axes."""

    mass: float
    omega_x: float
    omega_y: float
    omega_z: float

    def __post_init__(self):
        for name in ("mass", "omega_x", "omega_y", "omega_z"):
            object.__setattr__(self, name, _require_positive(name, getattr(self, name)))

    @property
    def omegas(self) -> np.ndarray:
        return np.array([self.omega_x, self.omega_y, self.omega_z])

    @classmethod
    def from_amu(cls, mass_amu, omega_x, omega_y, omega_z):
        return cls(_require_positive("mass_amu", mass_amu) * CONSTANTS.atomic_mass_unit,
                   omega_x, omega_y, omega_z)


@dataclass(frozen=True)
class ThermalState:
    """Mean phonon numbers of the three trap modes (non-integer allowed)."""

    nbar_x: float = 0.0
    nbar_y: float = 0.0
    nbar_z: float = 0.0

    def __post_init__(self):
        for name in ("nbar_x", "nbar_y", "nbar_z"):
            object.__setattr__(self, name, _require_nonnegative(name, getattr(self, name)))

    @property
    def nbars(self) -> np.ndarray:
        return np.array([self.nbar_x, self.nbar_y, self.nbar_z])

    def with_axial(self, nbar_z) -> "ThermalState":
        return ThermalState(self.nbar_x, self.nbar_y, nbar_z)


def default_transition() -> TransitionSpec:
    """729 nm S-D transition with the 1.168 s D-state lifetime."""
    return TransitionSpec.from_lifetime(729e-9, 1.168)


def default_trap() -> TrapSpec:
    """40Ca+ at 2pi x 1.5 MHz radial and 2pi x 760 kHz axial."""
    return TrapSpec.from_amu(40, 2 * math.pi * 1.5e6, 2 * math.pi * 1.5e6, 2 * math.pi * 760e3)


def doppler_state() -> ThermalState:
    return ThermalState(5.0, 5.0, 10.0)
