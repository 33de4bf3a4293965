#!/usr/bin/env python3
"""Parasitic excitation budget for the 4.2 um / 19 us setup.

The table is printed for a 1 % spurious-excitation threshold and for
p_max = 1, where the saturation limits land on the reference decades.
"""
import math

from gsdscope.budget import SetupSpec, budget_table, format_budget, spectral_leakage

setup = SetupSpec(4.2e-6, 19e-6)
print(f"w0 k = {setup.w0k:.1f}\n")
for p_max in (0.01, 1.0):
    print(f"p_max = {p_max}")
    print(format_budget(budget_table(setup, p_max)))

lk = spectral_leakage(19e-6, 2 * math.pi * 4e6)
print("square-pulse power at 4 MHz detuning:")
print(f"  sampled {lk.dft:.2e}, sinc^2 {lk.sinc2:.2e}, envelope {lk.envelope:.2e}, "
      f"budget constant {lk.paper:.0e}")
