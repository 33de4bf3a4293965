#!/usr/bin/env python3
"""Simulated GSD scans of a cold and a Doppler-cooled ion.

The beam is scanned along y_B and the ion along z_t. A wide axial wave
packet fills in the dark center; a ground-state-cooled one keeps the
contrast. Both images go to ``demo_output/`` as CSV and PGM.
"""
import sys
from pathlib import Path

from gsdscope import BeamSpec, PulseSpec, ScanSpec, ThermalState, scan_image
from gsdscope.imaging import middle_rows, profile_cut
from gsdscope.io import add_shot_noise, write_image, write_pgm
from gsdscope.units import default_trap

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_output")
out.mkdir(exist_ok=True)

trap = default_trap()
beam = BeamSpec("vortex", 1.2e-3, 4.2e-6)
pulse = PulseSpec(19e-6)
scan = ScanSpec(-500e-9, 500e-9, 51, -300e-9, 300e-9, 31)

for name, nbar_z in (("cold", 1.1), ("hot", 10.0)):
    img = scan_image(scan, beam, pulse, trap, ThermalState(5, 5, nbar_z), method="projected")
    noisy = add_shot_noise(img, 10, seed=1)
    write_image(out / f"{name}.csv", noisy)
    write_pgm(out / f"{name}.pgm", noisy)
    cut = profile_cut(img, middle_rows(img))
    mid = cut.value[len(cut) // 2]
    print(f"{name:4s} nbar_z={nbar_z:4.1f}: center {mid:.3f}, max {cut.value.max():.3f}, "
          f"center/max {mid / cut.value.max():.2f}")
print(f"images written to {out}/")
