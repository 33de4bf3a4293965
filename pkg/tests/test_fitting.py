import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gsdscope.beam import BeamSpec
from gsdscope.dynamics import PulseSpec, nbar_from_sideband_ratio, sideband_excitation_ratio
from gsdscope.errors import DomainError, RankDeficiencyError
from gsdscope.fitting import (
    FitProblem,
    FreeParameter,
    GsdContext,
    _deviance_residuals,
    binomial_sigma,
    fit_gsd_profile,
    fit_lorentzian,
    gsd_profile_model,
    least_squares,
    lorentzian,
)
from gsdscope.geometry import ground_state_width, nbar_for_width
from gsdscope.imaging import Profile
from gsdscope.units import ThermalState, TrapSpec, default_trap

TRAP = default_trap()
CTX = GsdContext(BeamSpec("vortex", 1.2e-3, 4.2e-6), PulseSpec(19e-6), TRAP, ThermalState(5, 5, 5))
X = np.linspace(-300e-9, 300e-9, 61)
S0 = float(ground_state_width(TRAP.mass, TRAP.omega_z))


def exp_problem(x, y, **kw):
    model = lambda p, x: p["a"] * np.exp(-p["k"] * x)
    return FitProblem(Profile(x, y), model, [("a", 1.0, 0.1, 10.0), ("k", 1.0, 0.01, 5.0)], **kw)


def test_zero_residual_fixed_point():
    x = np.linspace(0, 3, 20)
    y = 2.5 * np.exp(-0.7 * x)
    prob = exp_problem(x, y)
    prob.free = [FreeParameter("a", 2.5, 0.1, 10.0), FreeParameter("k", 0.7, 0.01, 5.0)]
    res = least_squares(prob, multistart=False)
    assert res.converged
    assert res.residual_rms < 1e-10
    assert res.estimates["a"] == pytest.approx(2.5, abs=1e-8)
    assert res.estimates["k"] == pytest.approx(0.7, abs=1e-8)


def test_recovers_from_multistart():
    x = np.linspace(0, 3, 30)
    res = least_squares(exp_problem(x, 4.0 * np.exp(-2.2 * x)))
    assert res.estimates["a"] == pytest.approx(4.0, rel=1e-7)
    assert res.estimates["k"] == pytest.approx(2.2, rel=1e-7)


def test_objective_never_increases():
    rng = np.random.default_rng(1)
    x = np.linspace(0, 3, 40)
    y = 3.0 * np.exp(-1.3 * x) + rng.normal(0, 0.05, x.size)
    res = least_squares(exp_problem(x, y), multistart=False)
    h = np.array(res.history)
    assert h.size > 2
    assert np.all(np.diff(h) < 0)
    assert all(u >= 0 for u in res.uncertainties.values())


def test_uncertainty_matches_linear_theory():
    # straight line with known sigma: covariance is inv(X^T W X) times reduced chi2
    rng = np.random.default_rng(4)
    x = np.linspace(0, 1, 50)
    y = 0.3 + 0.5 * x + rng.normal(0, 0.01, x.size)
    prob = FitProblem(Profile(x, y, np.full(x.size, 0.01)), lambda p, x: p["c"] + p["m"] * x,
                      [("c", 0.0, -1, 1), ("m", 0.0, -1, 1)])
    res = least_squares(prob)
    A = np.column_stack([np.ones_like(x), x]) / 0.01
    coef, *_ = np.linalg.lstsq(A, y / 0.01, rcond=None)
    chi2 = float(np.sum((A @ coef - y / 0.01) ** 2))
    cov = np.linalg.inv(A.T @ A) * chi2 / (x.size - 2)
    assert res.estimates["c"] == pytest.approx(coef[0], abs=1e-8)
    assert res.estimates["m"] == pytest.approx(coef[1], abs=1e-8)
    assert res.uncertainties["m"] == pytest.approx(math.sqrt(cov[1, 1]), rel=1e-4)


def test_rank_deficiency_names_pair():
    x = np.linspace(0, 1, 10)
    prob = FitProblem(Profile(x, 2 * x), lambda p, x: (p["a"] + p["b"]) * x,
                      [("a", 0.5, 0, 3), ("b", 0.5, 0, 3)])
    with pytest.raises(RankDeficiencyError) as exc:
        least_squares(prob)
    assert set(exc.value.pair) == {"a", "b"}


def test_rank_deficiency_inert_parameter():
    x = np.linspace(0, 1, 10)
    prob = FitProblem(Profile(x, 2 * x), lambda p, x: p["a"] * x,
                      [("a", 0.5, 0, 3), ("ghost", 0.0, -1, 1)])
    with pytest.raises(RankDeficiencyError) as exc:
        least_squares(prob)
    assert exc.value.pair[0] == "ghost"


def test_problem_validation():
    x = np.linspace(0, 1, 3)
    with pytest.raises(DomainError):
        FitProblem(Profile(x, x), lambda p, x: x, [("a", 0, 0, 1), ("b", 0, 0, 1), ("c", 0, 0, 1)])
    with pytest.raises(DomainError):
        FitProblem(Profile(x, x), lambda p, x: x, [("a", 0, 0, 1)], fixed={"a": 1})
    with pytest.raises(DomainError):
        FreeParameter("a", 0, 1, 1)
    with pytest.raises(DomainError):
        FreeParameter("a", 0, 0, math.inf)
    with pytest.raises(DomainError):
        FitProblem(Profile(x, x), lambda p, x: x, [("a", 0, 0, 1)], shots=0)
    with pytest.raises(DomainError, match="sigma"):
        FitProblem(Profile(x, x, [0.1, 0.0, 0.1]), lambda p, x: x, [("a", 0, 0, 1)])
    FitProblem(Profile(x, x, [0.1, 0.0, 0.1]), lambda p, x: x, [("a", 0, 0, 1)], shots=10)


def test_non_convergence_is_reported():
    x = np.linspace(0, 3, 30)
    res = least_squares(exp_problem(x, 4.0 * np.exp(-2.2 * x)), max_iter=1, multistart=False)
    assert not res.converged
    assert "maximum iterations" in res.message


def test_binomial_sigma():
    np.testing.assert_allclose(binomial_sigma([0.5, 0.0, 1.0], 10), [math.sqrt(0.025), 0.05, 0.05])


@given(st.floats(0.0, 1.0), st.floats(1e-6, 1 - 1e-6), st.integers(1, 10**6))
def test_deviance_residual_matches_direct_form(y, m, n):
    r = _deviance_residuals(np.array([y]), np.array([m]), n)[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (y * math.log(y / m) if y > 0 else 0.0) + ((1 - y) * math.log((1 - y) / (1 - m)) if y < 1 else 0.0)
    assert r == pytest.approx(math.copysign(math.sqrt(max(2 * n * t, 0.0)), m - y), rel=1e-6, abs=1e-6)


def test_deviance_residual_near_model():
    # to first order the residual is the Pearson residual
    y, n = np.array([0.1, 0.5, 0.93]), 10
    m = y + 1e-10
    np.testing.assert_allclose(_deviance_residuals(y, m, n), 1e-10 / np.sqrt(y * (1 - y) / n), rtol=1e-6)


def test_json_round_trip():
    x = np.linspace(0, 3, 20)
    res = least_squares(exp_problem(x, 2.0 * np.exp(-x)))
    d = json.loads(res.to_json())
    assert set(d) >= {"estimates", "uncertainties", "residual_rms", "converged"}
    assert d["estimates"]["a"] == res.estimates["a"]


def test_model_without_convolution_is_dark_at_center():
    v = gsd_profile_model({}, [0.0, 1e-7], CTX.without_convolution())
    assert v[0] == 0.0 and v[1] > 0


def test_model_delta_limit():
    stiff = TrapSpec(TRAP.mass, 1e4 * TRAP.omega_x, 1e4 * TRAP.omega_y, 1e4 * TRAP.omega_z)
    ctx = GsdContext(CTX.beam, CTX.pulse, stiff, ThermalState())
    conv = gsd_profile_model({}, X, ctx)
    bare = gsd_profile_model({}, X, ctx.without_convolution())
    np.testing.assert_allclose(conv, bare, atol=0.01)


def test_model_center_contrast():
    hot = gsd_profile_model({"sigma_z": 83.5e-9}, [0.0, 1e-9], CTX)
    cold = gsd_profile_model({"sigma_z": 32.6e-9}, [0.0, 1e-9], CTX)
    assert hot[0] > cold[0]


def test_model_grid_method_agrees():
    x = np.array([-1e-7, 0.0, 1.5e-7])
    a = gsd_profile_model({"nbar_z": 3.0}, x, CTX)
    from dataclasses import replace
    b = gsd_profile_model({"nbar_z": 3.0}, x, replace(CTX, method="grid"))
    np.testing.assert_allclose(a, b, atol=1e-4)
    with pytest.raises(DomainError):
        gsd_profile_model({}, x, replace(CTX, method="fft"))


@pytest.mark.parametrize("nbar", [1.1, 5.0, 10.0])
@pytest.mark.parametrize("power", [0.8e-3, 1.2e-3, 2.0e-3])
def test_noiseless_recovery(nbar, power):
    truth = {"nbar_z": nbar, "power": power, "offset": 0.0}
    y = gsd_profile_model(truth, X, CTX)
    res = fit_gsd_profile(Profile(X, y), CTX)
    assert res.estimates["nbar_z"] == pytest.approx(nbar, rel=5e-3)
    assert res.estimates["power"] == pytest.approx(power, rel=5e-3)
    assert res.derived["sigma_z"].value == pytest.approx(
        math.sqrt(S0**2 * (2 * nbar + 1)), rel=5e-3)


def test_translation_invariance():
    truth = {"nbar_z": 4.0, "power": 1.1e-3, "offset": 0.0}
    rng = np.random.default_rng(9)
    y = np.clip(gsd_profile_model(truth, X, CTX) + rng.normal(0, 0.02, X.size), 0, 1)
    d = 40e-9
    base = fit_gsd_profile(Profile(X, y), CTX)
    moved = fit_gsd_profile(Profile(X + d, y), CTX, initial={"offset": d},
                            bounds={"offset": (-150e-9 + d, 150e-9 + d)})
    assert moved.estimates["nbar_z"] == pytest.approx(base.estimates["nbar_z"], rel=1e-6)
    assert moved.estimates["power"] == pytest.approx(base.estimates["power"], rel=1e-6)
    assert moved.estimates["offset"] == pytest.approx(base.estimates["offset"] + d, abs=1e-13)


def test_likelihood_fit_with_many_shots():
    truth = {"nbar_z": float(nbar_for_width(32.6e-9, S0)), "power": 1.2e-3, "offset": 0.0}
    p = gsd_profile_model(truth, X, CTX)
    k = np.random.default_rng(0).binomial(100_000, p) / 100_000
    res = fit_gsd_profile(Profile(X, k), CTX, shots=100_000)
    assert res.derived["sigma_z"].value == pytest.approx(32.6e-9, rel=0.02)
    with pytest.raises(DomainError):
        fit_gsd_profile(Profile(X, k), CTX, shots=0)


def test_lorentzian_exact():
    x = np.linspace(-1, 1, 41)
    truth = {"amplitude": 0.6, "center": 0.1, "gamma": 0.15, "background": 0.02}
    res = fit_lorentzian(Profile(x, lorentzian(truth, x)))
    for k, v in truth.items():
        assert res.estimates[k] == pytest.approx(v, abs=1e-8)
    assert res.derived["peak"].value == pytest.approx(0.62, abs=1e-8)
    with pytest.raises(DomainError):
        fit_lorentzian(Profile(x[:4], x[:4]))


def test_lorentzian_thermometry_chain():
    x = np.linspace(-60e3, 60e3, 61)
    bsb = {"amplitude": 0.40, "center": 0.0, "gamma": 12e3, "background": 0.0}
    rsb = dict(bsb, amplitude=0.40 * float(sideband_excitation_ratio(1.1)))
    pr = fit_lorentzian(Profile(x, lorentzian(rsb, x))).derived["peak"].value
    pb = fit_lorentzian(Profile(x, lorentzian(bsb, x))).derived["peak"].value
    assert pr / pb == pytest.approx(0.5238, abs=1e-4)
    assert nbar_from_sideband_ratio(pr, pb).value == pytest.approx(1.1, rel=1e-6)


def test_flat_spectrum_never_gives_a_number():
    x = np.linspace(-1, 1, 21)
    try:
        res = fit_lorentzian(Profile(x, np.full(x.size, 0.3)))
    except RankDeficiencyError:
        return
    assert not res.converged
