"""Saturation bookkeeping and the parasitic-excitation error budget.

Four channels excite the ion at the dark center of the vortex beam. Each
has a small-angle probability of the form ``coefficient * S / (w0 k)^2``
where ``S = P / P_NS``, so the saturation limit for a tolerated probability
``p_max`` is ``S_lim = (p_max / coefficient) * (w0 k)^2``.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .units import CONSTANTS, TransitionSpec, default_transition

__all__ = [
    "Channel",
    "GammaConvention",
    "SetupSpec",
    "BudgetEntry",
    "Leakage",
    "SigmaMode",
    "REFERENCE_TABLE",
    "power_no_superresolution",
    "saturation",
    "bfield_prefactor",
    "bfield_rabi_ratio",
    "channel_coefficient",
    "spurious_probability",
    "spectral_leakage",
    "s_limit",
    "sigma_limit",
    "budget_table",
    "format_budget",
    "budget_csv",
]

CLEBSCH_GORDAN_SQ = 2.5


class Channel(enum.Enum):
    BFIELD_ANGLE = "BFieldAngle"
    PULSE_WIDTH = "PulseWidth"
    POWER_BROADENING = "PowerBroadening"
    POLARIZATION = "Polarization"


class GammaConvention(enum.Enum):
    """How the polarization angle enters the B-field ratio formula.

    ``MEASURED`` treats the supplied angle as the measured value and uses
    ``pi - gamma`` in the formula; ``FORMULA`` inserts it as given.
    """

    MEASURED = "measured"
    FORMULA = "formula"


class SigmaMode(enum.Enum):
    DERIVED_EXACT = "DerivedExact"
    PAPER_CLOSED_FORM = "PaperClosedForm"


# published decades: S_lim / (w0 k)^2 and sigma_lim in nm
REFERENCE_TABLE = {
    Channel.BFIELD_ANGLE: (1e2, 9.0),
    Channel.PULSE_WIDTH: (1e3, 4.0),
    Channel.POWER_BROADENING: (1e4, 1.0),
    Channel.POLARIZATION: (1e6, 0.1),
}

# published small-angle coefficients, for side-by-side comparison
REFERENCE_COEFFICIENTS = {
    Channel.BFIELD_ANGLE: 1e-2,
    Channel.PULSE_WIDTH: 1e-3,
    Channel.POWER_BROADENING: 1e-4,
    Channel.POLARIZATION: 1e-6,
}


@dataclass(frozen=True)
class SetupSpec:
    w0: float
    tau: float
    transition: TransitionSpec = field(default_factory=default_transition)
    theta_B: float = math.radians(3.0)
    gamma_pol: float = 3.0 * math.pi / 4.0
    pol_error: float = 0.01
    delta: float = 2.0 * math.pi * 4e6
    leakage_factor: float = 6e-4
    gamma_convention: GammaConvention = GammaConvention.MEASURED

    def __post_init__(self):
        for name in ("w0", "tau", "delta", "leakage_factor"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive, got {v!r}")
        if not 0.0 <= self.pol_error <= 1.0:
            raise DomainError("pol_error must lie in [0, 1]")
        object.__setattr__(self, "gamma_convention", GammaConvention(self.gamma_convention))
        if self.w0k <= 1.0:
            raise DomainError(f"w0*k must exceed 1, got {self.w0k:.3g}")

    @property
    def w0k(self) -> float:
        return self.w0 * self.transition.wavenumber


@dataclass(frozen=True)
class BudgetEntry:
    channel: Channel
    coefficient: float
    s_limit: float
    s_limit_over_w0k2: float
    sigma_limit: float
    sigma_limit_paperform: float
    paper_s_decade: float
    paper_sigma_nm: float


class Leakage(tuple):
    """``(dft, sinc2, envelope, paper)`` relative spectral power estimates."""

    __slots__ = ()

    def __new__(cls, dft, sinc2, envelope, paper):
        return super().__new__(cls, (dft, sinc2, envelope, paper))

    dft = property(lambda self: self[0])
    sinc2 = property(lambda self: self[1])
    envelope = property(lambda self: self[2])
    paper = property(lambda self: self[3])


# ---------------------------------------------------------------- saturation

def power_no_superresolution(w0, tau, transition: TransitionSpec | None = None):
    """Power whose vortex-ring peak drives a pi pulse in ``tau``.

    ``2 pi^5 e hbar c w0^2 / (3 lambda^3 Gamma tau^2)``
    """
    t = transition or default_transition()
    if w0 <= 0 or tau <= 0:
        raise DomainError("w0 and tau must be positive")
    lam = t.wavelength
    return (2.0 * math.pi**5 * CONSTANTS.euler * CONSTANTS.hbar * CONSTANTS.c * w0**2
            / (3.0 * lam**3 * t.linewidth * tau**2))


def saturation(power, p_ns):
    if p_ns <= 0:
        raise DomainError("p_ns must be positive")
    return np.asarray(power, dtype=float) / p_ns if np.ndim(power) else float(power) / p_ns


# ------------------------------------------------------------------ channels

def bfield_prefactor(theta_B, gamma_pol, convention=GammaConvention.MEASURED):
    """Angular factor of the B-field ratio, without the ``1/(sqrt2 k w0)``."""
    g = gamma_pol
    if GammaConvention(convention) is GammaConvention.MEASURED:
        g = math.pi - gamma_pol
    cg, sg = math.cos(g), math.sin(g)
    den = cg * math.cos(2 * theta_B) + math.cos(theta_B) * sg
    if abs(den) < 1e-9:
        raise DomainError(f"B-field ratio is singular at theta_B={theta_B!r}, gamma={g!r}")
    return (cg + 2 * cg * math.cos(theta_B) + sg) / den * math.sin(theta_B)


def bfield_rabi_ratio(theta_B, gamma_pol, w0k, convention=GammaConvention.MEASURED):
    """Rabi frequency of the unwanted component relative to the ring peak."""
    if w0k <= 0:
        raise DomainError("w0k must be positive")
    return bfield_prefactor(theta_B, gamma_pol, convention) / (math.sqrt(2.0) * w0k)


def channel_coefficient(channel, setup: SetupSpec) -> float:
    """Factor multiplying ``S / (w0 k)^2`` in the small-angle probability."""
    channel = Channel(channel)
    detune = (math.pi / (setup.tau * setup.delta)) ** 2
    if channel is Channel.BFIELD_ANGLE:
        pref = bfield_prefactor(setup.theta_B, setup.gamma_pol, setup.gamma_convention)
        return math.pi**2 / 8.0 * pref**2
    if channel is Channel.PULSE_WIDTH:
        return math.pi**2 / 4.0 * CLEBSCH_GORDAN_SQ * setup.leakage_factor
    if channel is Channel.POWER_BROADENING:
        return CLEBSCH_GORDAN_SQ * detune
    return detune * setup.pol_error


def spurious_probability(channel, S, setup: SetupSpec, exact=False):
    """Parasitic excitation at the beam center for saturation ``S``.

    The default small-angle form is linear in ``S``. ``exact=True`` maps it
    through ``sin^2(sqrt(p))`` for the resonant channels and ``p / (1 + p)``
    for the off-resonant ones, which keeps the result in [0, 1].
    """
    S = np.asarray(S, dtype=float)
    if np.any(S < 0):
        raise DomainError("S must be non-negative")
    channel = Channel(channel)
    p = channel_coefficient(channel, setup) * S / setup.w0k**2
    if exact:
        if channel in (Channel.BFIELD_ANGLE, Channel.PULSE_WIDTH):
            p = np.sin(np.sqrt(p)) ** 2
        else:
            p = p / (1.0 + p)
    return float(p) if p.ndim == 0 else p


def spectral_leakage(tau, delta, samples=4096, paper_value=6e-4) -> Leakage:
    """Relative spectral power of a square pulse at detuning ``delta``.

    ``dft`` sums the sampled pulse against ``exp(-i delta t)``, ``sinc2``
    is the analytic ``(sin(x)/x)^2`` with ``x = delta tau / 2`` and
    ``envelope`` is its upper bound ``min(1, 1/x^2)``.
    """
    if tau <= 0 or delta < 0:
        raise DomainError("tau must be positive and delta non-negative")
    x = 0.5 * delta * tau
    t = (np.arange(samples) + 0.5) * (tau / samples)
    amp = np.mean(np.exp(-1j * delta * t))
    sinc2 = 1.0 if x == 0 else (math.sin(x) / x) ** 2
    envelope = 1.0 if x <= 1 else 1.0 / x**2
    return Leakage(float(abs(amp) ** 2), sinc2, envelope, paper_value)


# -------------------------------------------------------------------- limits

def s_limit(channel, p_max, setup: SetupSpec) -> float:
    """Saturation at which the small-angle probability reaches ``p_max``."""
    if not 0.0 < p_max <= 1.0:
        raise DomainError("p_max must lie in (0, 1]")
    return p_max / channel_coefficient(channel, setup) * setup.w0k**2


def sigma_limit(s_lim_normalized, transition: TransitionSpec | None = None,
                mode=SigmaMode.DERIVED_EXACT) -> float:
    """Resolution reached at ``S = s_lim_normalized * (w0 k)^2``.

    Substituting ``P = S P_NS`` into the resolution formula gives
    ``lambda / (2 pi sqrt(2 pi^2 e s))``; the waist cancels.
    ``PAPER_CLOSED_FORM`` returns ``lambda / (2 pi sqrt(2 pi^3 e) sqrt(s))``.
    """
    if s_lim_normalized <= 0:
        raise DomainError("s_lim_normalized must be positive")
    lam = (transition or default_transition()).wavelength
    e = CONSTANTS.euler
    if SigmaMode(mode) is SigmaMode.DERIVED_EXACT:
        return lam / (2 * math.pi * math.sqrt(2 * math.pi**2 * e * s_lim_normalized))
    return lam / (2 * math.pi * math.sqrt(2 * math.pi**3 * e) * math.sqrt(s_lim_normalized))


def budget_table(setup: SetupSpec, p_max=0.01) -> list:
    """One :class:`BudgetEntry` per channel, in :class:`Channel` order."""
    out = []
    for ch in Channel:
        coef = channel_coefficient(ch, setup)
        s_norm = p_max / coef
        decade, sigma_nm = REFERENCE_TABLE[ch]
        out.append(BudgetEntry(
            channel=ch,
            coefficient=coef,
            s_limit=s_limit(ch, p_max, setup),
            s_limit_over_w0k2=s_norm,
            sigma_limit=sigma_limit(s_norm, setup.transition, SigmaMode.DERIVED_EXACT),
            sigma_limit_paperform=sigma_limit(s_norm, setup.transition, SigmaMode.PAPER_CLOSED_FORM),
            paper_s_decade=decade,
            paper_sigma_nm=sigma_nm,
        ))
    return out


CSV_COLUMNS = ("channel", "coefficient", "s_limit_over_w0k2", "sigma_limit_derived_m",
               "sigma_limit_paperform_m", "paper_s_decade", "paper_sigma_nm")


def _row(e: BudgetEntry):
    return (e.channel.value, e.coefficient, e.s_limit_over_w0k2, e.sigma_limit,
            e.sigma_limit_paperform, e.paper_s_decade, e.paper_sigma_nm)


def budget_csv(entries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for e in entries:
        w.writerow([r if isinstance(r, str) else repr(float(r)) for r in _row(e)])
    return buf.getvalue()


def format_budget(entries) -> str:
    """Aligned plain-text table."""
    head = ("channel", "coefficient", "S_lim/(w0k)^2", "sigma_lim [nm]",
            "closed form [nm]", "ref S decade", "ref sigma [nm]")
    rows = [head]
    for e in entries:
        rows.append((e.channel.value, f"{e.coefficient:.3e}", f"{e.s_limit_over_w0k2:.3e}",
                     f"{e.sigma_limit * 1e9:.4g}", f"{e.sigma_limit_paperform * 1e9:.4g}",
                     f"{e.paper_s_decade:.0e}", f"{e.paper_sigma_nm:g}"))
    widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                       for i, (c, w) in enumerate(zip(r, widths))).rstrip() for r in rows]
    return "\n".join(lines) + "\n"
