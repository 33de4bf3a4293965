import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gsdscope.beam import BeamSpec, near_center_intensity, rabi_frequency
from gsdscope.dynamics import PulseSpec, coherent_excitation
from gsdscope.errors import AccuracyError, DomainError
from gsdscope.geometry import WavePacket, default_frames, thermal_wavepacket, transverse_covariance
from gsdscope.imaging import (
    EpsfMode,
    ExcitationMap,
    GridSpec,
    ImageGrid,
    Profile,
    ScanSpec,
    convolve_grid,
    convolve_projected,
    epsf_profile,
    epsf_sigma,
    mc_convolve,
    middle_rows,
    profile_cut,
    scan_image,
)
from gsdscope.units import ThermalState, default_trap, default_transition, doppler_state

TRAP = default_trap()
T = default_transition()
PULSE = PulseSpec(19e-6)
BEAM = BeamSpec("vortex", 1.2e-3, 4.2e-6)


def test_epsf_sigma_values():
    assert epsf_sigma(5e-6, 20e-6, 1e-3, T) == pytest.approx(98.3e-9, abs=0.1e-9)
    assert epsf_sigma(5e-6, 20e-6, 1e-3, T) == pytest.approx(90e-9, rel=0.15)
    coef = epsf_sigma(1e-6, 1e-6, 1e-3, T)
    assert coef == pytest.approx(75e-9, rel=0.1)
    with pytest.raises(DomainError):
        epsf_sigma(5e-6, 0.0, 1e-3, T)


@pytest.mark.parametrize("w0,tau,p", [(5e-6, 20e-6, 1e-3), (4.2e-6, 19e-6, 1.2e-3), (2e-6, 3e-6, 1e-5)])
def test_epsf_sigma_is_one_radian(w0, tau, p):
    beam = BeamSpec("vortex", p, w0)
    s = epsf_sigma(w0, tau, p, T)
    assert rabi_frequency(near_center_intensity(s, beam), T) * tau == pytest.approx(1.0, rel=1e-9)


def test_dark_center_any_power_or_state():
    for power in (1e-6, 1.2e-3, 1e-1):
        beam = BeamSpec("vortex", power, 4.2e-6)
        for state in (ThermalState(), ThermalState(5, 5, 30)):
            prof = epsf_profile(beam, PULSE, TRAP, state)
            assert prof.value[0] == 0.0
        assert epsf_profile(beam, PULSE, mode=EpsfMode.POINT_ION).value[0] == 0.0


def first_max(prof):
    v = prof.value
    i = np.nonzero((v[1:-1] >= v[:-2]) & (v[1:-1] > v[2:]))[0]
    return prof.coordinate[i[0] + 1] if i.size else prof.coordinate[np.argmax(v)]


def test_central_lobe_narrows_with_power():
    pulse = PulseSpec(20e-6)
    r = np.linspace(0, 6e-6, 3001)
    lo = epsf_profile(BeamSpec("vortex", 1e-6, 4e-6), pulse, mode="point_ion", radii=r)
    hi = epsf_profile(BeamSpec("vortex", 120e-6, 4e-6), pulse, mode="point_ion", radii=r)
    assert first_max(hi) < first_max(lo)
    assert first_max(lo) == pytest.approx(4e-6 / math.sqrt(2), abs=5e-9)


def test_gaussian_center_depends_on_state():
    pulse = PulseSpec(20e-6)
    g = BeamSpec("gaussian", 120e-6, 4e-6)
    v = BeamSpec("vortex", 120e-6, 4e-6)
    cold, hot = ThermalState(5, 5, 1), ThermalState(5, 5, 30)
    at0 = lambda beam, s: epsf_profile(beam, pulse, TRAP, s, radii=[0.0, 1e-7]).value[0]
    assert abs(at0(g, cold) - at0(g, hot)) > 1e-3
    assert abs(at0(v, cold) - at0(v, hot)) < 1e-12


def test_epsf_profile_modes():
    with pytest.raises(DomainError):
        epsf_profile(BEAM, PULSE)
    with pytest.raises(DomainError):
        epsf_profile(BEAM, PULSE, mode="point_ion", radii=[-1e-9, 0.0])
    prof = epsf_profile(BEAM, PULSE, mode="point_ion", radii=[0.0, 1e-7, 2e-7])
    om = ExcitationMap(BEAM, PULSE.tau).omega_r2(prof.coordinate**2)
    np.testing.assert_array_equal(prof.value, coherent_excitation(om, PULSE.tau))


def test_grid_and_profile_validation():
    with pytest.raises(DomainError):
        GridSpec(4)
    with pytest.raises(DomainError):
        GridSpec(64, 0.0)
    assert GridSpec.publication().step == pytest.approx(1e-6 / 512)
    with pytest.raises(DomainError):
        Profile([0.0], [0.5])
    with pytest.raises(DomainError):
        Profile([0.0, 0.0], [0.5, 0.5])
    with pytest.raises(DomainError):
        ImageGrid(np.full((2, 2), 1.5), [0, 1], [0, 1])
    with pytest.raises(DomainError):
        ScanSpec(0, 1, 0, 0, 1, 1)


def test_coarse_grid_rejected():
    wp = thermal_wavepacket(TRAP, doppler_state())
    with pytest.raises(AccuracyError, match="sigma_min/4"):
        convolve_grid(BEAM, PULSE, TRAP, doppler_state(), wp, GridSpec(16, 1e-6))
    with pytest.raises(AccuracyError, match="8 \\* sigma_max"):
        convolve_grid(BEAM, PULSE, TRAP, doppler_state(), wp, GridSpec(64, 0.3e-6))


def test_uniform_excitation_is_reproduced():
    # a centimetre-wide Gaussian beam is flat over the wave packet
    beam = BeamSpec("gaussian", 10.0, 1e-2)
    state = doppler_state()
    wp = thermal_wavepacket(TRAP, state).moved(np.array([1e-7, -5e-8, 2e-8]))
    c = float(epsf_profile(beam, PULSE, TRAP, state, radii=[0.0, 1e-9]).value[0])
    assert 0.05 < c < 0.95
    assert convolve_grid(beam, PULSE, TRAP, state, wp) == pytest.approx(c, abs=1e-6)


def test_second_moment_at_dark_center():
    # low power: P_D ~ (phase / 2)^2 with phase = r / sigma_ePSF
    beam = BeamSpec("vortex", 1e-6, 4.2e-6)
    state = doppler_state()
    wp = thermal_wavepacket(TRAP, state)
    s = epsf_sigma(4.2e-6, PULSE.tau, 1e-6, T)
    expected = np.trace(transverse_covariance(wp, default_frames())) / (4 * s * s)
    got = convolve_grid(beam, PULSE, TRAP, state, wp, mode="point_ion")
    assert got == pytest.approx(expected, rel=2e-2)


def test_zero_width_limit():
    wp = WavePacket(1e-15, 1e-15, 1e-15, center=(1e-7, 2e-8, -3e-8))
    beam = BEAM.shifted((1e-8, 0))
    state = doppler_state()
    t = default_frames().transverse_axes @ wp.center - np.asarray(beam.center)
    point = ExcitationMap(beam, PULSE.tau, 0.0).at_r2(t @ t)
    mc = mc_convolve(beam, PULSE, TRAP, state, wp, mode="point_ion", samples=2000)
    assert mc.value == pytest.approx(float(point), abs=1e-9)


def test_mc_error_scaling():
    wp = thermal_wavepacket(TRAP, doppler_state())
    a = mc_convolve(BEAM, PULSE, TRAP, doppler_state(), wp, samples=40000, seed=5)
    b = mc_convolve(BEAM, PULSE, TRAP, doppler_state(), wp, samples=80000, seed=5)
    assert a.error / b.error == pytest.approx(math.sqrt(2), rel=0.05)
    assert mc_convolve(BEAM, PULSE, TRAP, doppler_state(), wp, samples=40000, seed=5) == a
    with pytest.raises(DomainError):
        mc_convolve(BEAM, PULSE, TRAP, doppler_state(), wp, samples=10)


def random_config(rng):
    power = rng.uniform(0.1e-3, 2e-3)
    beam = BeamSpec("vortex", power, 4.2e-6, center=tuple(rng.uniform(-2e-7, 2e-7, 2)))
    state = ThermalState(*rng.uniform(0, 10, 3))
    wp = WavePacket(*rng.uniform(35e-9, 110e-9, 3), center=rng.uniform(-3e-7, 3e-7, 3))
    return beam, PulseSpec(rng.uniform(5e-6, 30e-6)), state, wp


def test_grid_matches_monte_carlo():
    rng = np.random.default_rng(2024)
    for k in range(20):
        beam, pulse, state, wp = random_config(rng)
        g = convolve_grid(beam, pulse, TRAP, state, wp)
        mc = mc_convolve(beam, pulse, TRAP, state, wp, samples=100_000, seed=k)
        assert abs(g - mc.value) < 3 * mc.error + 1e-12, (k, g, mc)


def test_projected_matches_grid():
    rng = np.random.default_rng(7)
    for _ in range(5):
        beam, pulse, state, wp = random_config(rng)
        g = convolve_grid(beam, pulse, TRAP, state, wp)
        assert convolve_projected(beam, pulse, TRAP, state, wp) == pytest.approx(g, abs=1e-5)


def test_grid_refinement():
    state = doppler_state()
    wp = thermal_wavepacket(TRAP, state)
    for beam in (BEAM, BEAM.shifted((1e-7, 0))):
        coarse = convolve_grid(beam, PULSE, TRAP, state, wp, GridSpec(128, 1e-6))
        fine = convolve_grid(beam, PULSE, TRAP, state, wp, GridSpec(256, 1e-6))
        assert abs(coarse - fine) < 5e-3 * fine


def test_center_value_grows_with_axial_width():
    state = doppler_state()
    grid = GridSpec(160, 0.7e-6)
    vals = [convolve_grid(BEAM, PULSE, TRAP, state, WavePacket(43e-9, 43e-9, s * 1e-9), grid)
            for s in (20, 40, 60, 80)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    assert vals[-1] > vals[0]


def test_hot_center_brighter_than_cold():
    scan = ScanSpec(0, 0, 1, 0, 0, 1)
    hot = scan_image(scan, BEAM, PULSE, TRAP, ThermalState(5, 5, 10.5))
    cold = scan_image(scan, BEAM, PULSE, TRAP, ThermalState(5, 5, 1.1))
    assert hot.values[0, 0] > cold.values[0, 0]


def test_scan_symmetry():
    scan = ScanSpec(-2e-7, 2e-7, 9, -2e-7, 2e-7, 7)
    for method in ("grid", "projected"):
        img = scan_image(scan, BEAM, PULSE, TRAP, doppler_state(), method=method)
        np.testing.assert_allclose(img.values, img.values[:, ::-1], atol=1e-10)
        np.testing.assert_allclose(img.values, img.values[::-1, :], atol=1e-10)
    assert img.provenance["method"] == "projected"
    with pytest.raises(DomainError):
        scan_image(scan, BEAM, PULSE, TRAP, doppler_state(), method="fft")


def test_scan_point_limit():
    scan = ScanSpec(-3e-7, 3e-7, 11, -1e-7, 1e-7, 3)
    wp = WavePacket(1e-12, 1e-12, 1e-12)
    img = scan_image(scan, BEAM, PULSE, TRAP, ThermalState(), method="projected", wavepacket=wp)
    f = default_frames()
    emap = ExcitationMap(BEAM, PULSE.tau, 0.0)
    a_dir = f.transverse_axes @ f.beam_to_lab[:, 1]
    b_dir = f.transverse_axes @ f.trap_to_lab[:, 2]
    ref = np.array([[emap(*(b * b_dir - a * a_dir)) for a in scan.a_coords] for b in scan.b_coords])
    np.testing.assert_allclose(img.values, ref, atol=1e-9)
    assert img.provenance["wavepacket"]["sigmas"] == [1e-12] * 3


def test_middle_rows_cut_matches_line():
    scan = ScanSpec(-3e-7, 3e-7, 13, -2e-9, 2e-9, 3)
    state = doppler_state()
    img = scan_image(scan, BEAM, PULSE, TRAP, state)
    cut = profile_cut(img, middle_rows(img))
    wp = thermal_wavepacket(TRAP, state)
    a_dir = default_frames().transverse_axes @ default_frames().beam_to_lab[:, 1]
    line = convolve_projected(BEAM, PULSE, TRAP, state, wp, beam_offsets=np.outer(scan.a_coords, a_dir))
    np.testing.assert_allclose(cut.value, line, atol=0.01)
    assert middle_rows(img) == [0, 1, 2]


def test_profile_cut():
    vals = np.array([[0.1, 0.2, 0.3], [0.2, 0.4, 0.6], [0.3, 0.6, 0.9]])
    img = ImageGrid(vals, [0.0, 1.0, 2.0], [0.0, 1.0, 2.0])
    one = profile_cut(img, [1])
    np.testing.assert_array_equal(one.value, vals[1])
    assert one.sigma is None
    same = profile_cut(ImageGrid(np.tile(vals[1], (3, 1)), [0, 1, 2], [0, 1, 2]), [0, 1, 2])
    np.testing.assert_allclose(same.value, vals[1], rtol=1e-15)
    np.testing.assert_allclose(same.sigma, 0.0, atol=1e-15)
    cut = profile_cut(img, [0, 1, 2])
    np.testing.assert_allclose(cut.sigma, vals.std(axis=0, ddof=1) / math.sqrt(3))
    with pytest.raises(DomainError):
        profile_cut(img, [])
    with pytest.raises(DomainError):
        profile_cut(img, [3])


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-7, 1e-1), st.floats(1e-6, 1e-4), st.floats(0, 50), st.floats(-2e-6, 2e-6),
       st.sampled_from(["vortex", "gaussian"]))
def test_images_are_probabilities(power, tau, nbar, shift, shape):
    beam = BeamSpec(shape, power, 4.2e-6)
    scan = ScanSpec(shift - 2e-7, shift + 2e-7, 5, -1e-7, 1e-7, 2)
    img = scan_image(scan, beam, PulseSpec(tau), TRAP, ThermalState(nbar, nbar, nbar), method="projected")
    assert np.all(np.isfinite(img.values))
    assert np.all((img.values >= 0) & (img.values <= 1))
