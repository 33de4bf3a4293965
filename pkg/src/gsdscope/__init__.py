"""Ground-state-depletion (GSD) microscopy of a single trapped ion.

A hollow (vortex) beam depletes the ion's ground state everywhere except at
its dark center. This package models the beam, the thermally dephased
Rabi dynamics, the ion's thermal wave packet, simulated scan images, fits
of measured profiles and the parasitic-excitation error budget.
"""

import os as _os

# Cap BLAS threads before numpy is first imported.
if "GSDSCOPE_THREADS" in _os.environ:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["GSDSCOPE_THREADS"])

__version__ = "0.1.0"

from .beam import BeamShape, BeamSpec, intensity, rabi_at, rabi_frequency  # noqa: E402
from .budget import (  # noqa: E402
    Channel,
    SetupSpec,
    budget_table,
    power_no_superresolution,
    s_limit,
    saturation,
    sigma_limit,
    spurious_probability,
)
from .dynamics import (  # noqa: E402
    DephasingVariant,
    PulseSpec,
    coherent_excitation,
    dephasing_beta,
    lamb_dicke,
    nbar_from_sideband_ratio,
    thermal_excitation,
    thermal_excitation_fock_oracle,
)
from .errors import (  # noqa: E402
    AccuracyError,
    ConfigError,
    DomainError,
    GsdError,
    QuantityParseError,
    RankDeficiencyError,
)
from .fitting import FitResult, GsdContext, fit_gsd_profile, fit_lorentzian, least_squares  # noqa: E402
from .geometry import FrameSet, WavePacket, default_frames, thermal_wavepacket  # noqa: E402
from .imaging import (  # noqa: E402
    GridSpec,
    ImageGrid,
    Profile,
    ScanSpec,
    convolve_grid,
    convolve_projected,
    epsf_profile,
    epsf_sigma,
    mc_convolve,
    scan_image,
)
from .units import (  # noqa: E402
    ThermalState,
    TransitionSpec,
    TrapSpec,
    default_transition,
    default_trap,
    parse_quantity,
)
