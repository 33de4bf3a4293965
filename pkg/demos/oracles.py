#!/usr/bin/env python3
"""Cross-checks between independent evaluations of the same quantities.

The wave-packet average is computed on a 3D grid, by Monte Carlo and on the
2D transverse marginal. The closed-form thermal Rabi signal is compared
with the explicit Fock-state sum.
"""
import math

from gsdscope import BeamSpec, PulseSpec, ThermalState
from gsdscope.dynamics import dephasing_beta, thermal_excitation, thermal_excitation_fock_oracle
from gsdscope.geometry import k_projections, default_frames, thermal_wavepacket
from gsdscope.imaging import GridSpec, convolve_grid, convolve_projected, mc_convolve
from gsdscope.units import default_trap

trap = default_trap()
pulse = PulseSpec(19e-6)
state = ThermalState(5, 5, 10)
wp = thermal_wavepacket(trap, state)
for offset in (0.0, 100e-9, 250e-9):
    beam = BeamSpec("vortex", 1.2e-3, 4.2e-6, center=(offset, 0.0))
    g = convolve_grid(beam, pulse, trap, state, wp, GridSpec(128, 1e-6))
    mc = mc_convolve(beam, pulse, trap, state, wp, samples=200_000, seed=1)
    pr = convolve_projected(beam, pulse, trap, state, wp)
    print(f"offset {offset * 1e9:5.0f} nm: grid {g:.5f}  MC {mc.value:.5f} +- {mc.error:.5f}  "
          f"2D {pr:.5f}")

ks = k_projections(default_frames(), beam.transition.wavenumber)
print("\n phase   closed form   Fock sum   (state 5, 5, 10)")
beta = dephasing_beta(trap, state, ks)
for phi in (0.5, 1.0, math.pi / 2, math.pi, 2 * math.pi):
    om = phi / pulse.tau
    print(f"{phi:6.3f}   {thermal_excitation(om, pulse.tau, beta):.4f}       "
          f"{thermal_excitation_fock_oracle(om, pulse.tau, trap, state, ks):.4f}")
