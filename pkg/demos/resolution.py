#!/usr/bin/env python3
"""How small is the dark spot?

Prints the ePSF width for a few powers, checks that the Rabi phase at that
radius is one radian and shows the point-ion profile near the vortex center.
"""
import numpy as np

from gsdscope import BeamSpec, PulseSpec, epsf_profile, epsf_sigma
from gsdscope.beam import near_center_intensity, rabi_frequency
from gsdscope.budget import power_no_superresolution, saturation
from gsdscope.units import default_transition

t = default_transition()
w0, tau = 4.2e-6, 19e-6
p_ns = power_no_superresolution(w0, tau, t)
print(f"P_NS = {p_ns * 1e6:.2f} uW  (pi pulse on the ring at w0/sqrt2)")

print("\n  power      S      sigma_ePSF   phase at sigma")
for p in (50e-6, 250e-6, 1.2e-3, 5e-3):
    s = epsf_sigma(w0, tau, p, t)
    beam = BeamSpec("vortex", p, w0, t)
    phase = rabi_frequency(near_center_intensity(s, beam), t) * tau
    print(f"{p * 1e3:7.3f} mW {saturation(p, p_ns):7.1f} {s * 1e9:9.1f} nm   {phase:.12f}")

beam = BeamSpec("vortex", 1.2e-3, w0, t)
prof = epsf_profile(beam, PulseSpec(tau), mode="point_ion", radii=np.linspace(0, 400e-9, 9))
print("\npoint-ion depletion near the center, 1.2 mW")
for r, v in zip(prof.coordinate, prof.value):
    print(f"  r = {r * 1e9:5.0f} nm   P_D = {v:.4f}")
