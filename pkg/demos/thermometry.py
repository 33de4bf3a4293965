#!/usr/bin/env python3
"""Sideband thermometry from two noisy spectra.

Red and blue sideband scans are generated for nbar = 1.1, fitted with
Lorentzians, and the peak ratio is turned into a mean phonon number.
"""
import numpy as np

from gsdscope.dynamics import nbar_from_sideband_ratio, sideband_excitation_ratio
from gsdscope.fitting import fit_lorentzian, lorentzian
from gsdscope.imaging import Profile
from gsdscope.io import add_shot_noise

x = np.linspace(-60e3, 60e3, 41)
shots = 200
bsb = {"amplitude": 0.45, "center": 0.0, "gamma": 10e3, "background": 0.01}
rsb = dict(bsb, amplitude=0.45 * float(sideband_excitation_ratio(1.1)))

peaks = {}
for name, params, seed in (("red", rsb, 1), ("blue", bsb, 2)):
    data = add_shot_noise(Profile(x, lorentzian(params, x)), shots, seed)
    res = fit_lorentzian(data)
    peaks[name] = res.derived["peak"]
    print(f"{name:4s} sideband peak {peaks[name].value:.3f} +- {peaks[name].error:.3f}")

est = nbar_from_sideband_ratio(peaks["red"].value, peaks["blue"].value,
                               sigma_rsb=peaks["red"].error, sigma_bsb=peaks["blue"].error)
print(f"nbar = {est.value:.2f} +- {est.error:.2f}")
