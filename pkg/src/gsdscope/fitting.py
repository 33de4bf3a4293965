"""Nonlinear least squares for GSD profiles and sideband spectra.

The optimizer is a damped Gauss-Newton (Levenberg-Marquardt) iteration with
box bounds, a forward-difference Jacobian and a grid-seeded multi-start.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np
from scipy import special

from .beam import BeamSpec
from .dynamics import DephasingVariant, Estimate, PulseSpec
from .errors import DomainError, RankDeficiencyError
from .geometry import (
    FrameSet,
    default_frames,
    ground_state_width,
    nbar_for_width,
    thermal_wavepacket,
    thermal_width,
)
from .imaging import (
    ExcitationMap,
    GridSpec,
    Profile,
    _beta_for,
    _scan_directions,
    _transverse_offset,
    convolve_grid,
    convolve_projected,
)
from .units import ThermalState, TrapSpec

__all__ = [
    "FreeParameter",
    "FitProblem",
    "FitResult",
    "least_squares",
    "GsdContext",
    "gsd_profile_model",
    "gsd_problem",
    "fit_gsd_profile",
    "sigma_z_estimate",
    "lorentzian",
    "fit_lorentzian",
    "binomial_sigma",
]


@dataclass(frozen=True)
class FreeParameter:
    name: str
    initial: float
    lower: float
    upper: float

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise DomainError(f"bounds of {self.name!r} must be finite")
        if not self.lower < self.upper:
            raise DomainError(f"bounds of {self.name!r} must satisfy lower < upper")


@dataclass
class FitProblem:
    """Data, a model ``f(params, x)`` and the free/fixed parameter split.

    ``model`` receives a dict holding both fixed and free values. With
    ``shots`` the data are read as binomial frequencies ``k / shots`` and the
    residuals are signed deviance residuals, so least squares becomes the
    binomial maximum-likelihood fit and ``data.sigma`` is ignored.
    """

    data: Profile
    model: Callable[[Mapping[str, float], np.ndarray], np.ndarray]
    free: list
    fixed: dict = field(default_factory=dict)
    name: str = "custom"
    shots: int | None = None

    def __post_init__(self):
        free = []
        for p in self.free:
            free.append(p if isinstance(p, FreeParameter) else FreeParameter(*p))
        self.free = free
        names = [p.name for p in free]
        if len(set(names)) != len(names):
            raise DomainError("duplicate free parameter names")
        overlap = set(names) & set(self.fixed)
        if overlap:
            raise DomainError(f"parameters both free and fixed: {sorted(overlap)}")
        if self.shots is not None and not self.shots >= 1:
            raise DomainError("shots must be >= 1")
        if self.shots is None and self.data.sigma is not None and not np.all(self.data.sigma > 0):
            raise DomainError("per-point sigma must be positive; give shots for a likelihood fit")
        if len(self.data) < len(free) + 1:
            raise DomainError(
                f"{len(self.data)} data points cannot constrain {len(free)} free parameters"
            )

    @property
    def names(self):
        return [p.name for p in self.free]

    @property
    def sigma(self):
        if self.data.sigma is None:
            return np.ones_like(self.data.value)
        return self.data.sigma


@dataclass
class FitResult:
    estimates: dict
    uncertainties: dict
    residual_rms: float
    iterations: int
    converged: bool
    chi2: float = float("nan")
    message: str = ""
    covariance: np.ndarray | None = None
    derived: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    def to_dict(self):
        out = {
            "estimates": dict(self.estimates),
            "uncertainties": dict(self.uncertainties),
            "residual_rms": self.residual_rms,
            "converged": bool(self.converged),
            "iterations": self.iterations,
            "chi2": self.chi2,
            "message": self.message,
        }
        if self.derived:
            out["derived"] = {k: {"value": v.value, "error": v.error} for k, v in self.derived.items()}
        return out

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


# ---------------------------------------------------------------- optimizer

class _Objective:
    def __init__(self, problem: FitProblem):
        self.problem = problem
        self.x = problem.data.coordinate
        self.y = problem.data.value
        self.shots = problem.shots
        self.w = 1.0 / problem.sigma if self.shots is None else None
        self.lo = np.array([p.lower for p in problem.free])
        self.hi = np.array([p.upper for p in problem.free])
        self.nfev = 0

    def params(self, p):
        d = dict(self.problem.fixed)
        d.update(zip(self.problem.names, (float(v) for v in p)))
        return d

    def model(self, p):
        self.nfev += 1
        return np.asarray(self.problem.model(self.params(p), self.x), dtype=float)

    def residuals(self, p):
        model = self.model(p)
        if self.shots is None:
            return (model - self.y) * self.w
        return _deviance_residuals(self.y, model, self.shots)

    def jacobian(self, p, r0, rel_step=1e-6):
        J = np.empty((r0.size, p.size))
        for i in range(p.size):
            h = rel_step * max(abs(p[i]), 1e-2 * (self.hi[i] - self.lo[i]))
            q = p.copy()
            if q[i] + h > self.hi[i]:
                h = -h
            q[i] += h
            J[:, i] = (self.residuals(q) - r0) / h
        return J


def _log1pmx(a):
    """``log(1 + a) - a``, accurate for small ``a``."""
    a = np.asarray(a, dtype=float)
    out = np.log1p(a) - a
    small = np.abs(a) < 0.1
    x = a[small]
    # alternating series -x^2/2 + x^3/3 - ...; 16 terms reach double precision at |x| < 0.1
    acc = np.zeros_like(x)
    for k in range(17, 1, -1):
        acc = x * (acc + (-1) ** (k + 1) / k)
    out[small] = x * acc
    return out


def _half_deviance(y, m):
    """``y log(y/m) + (1-y) log((1-y)/(1-m))``, also accurate when ``m`` is close to ``y``."""
    out = special.xlogy(y, y / m) + special.xlogy(1.0 - y, (1.0 - y) / (1.0 - m))
    u = m - y
    near = (np.abs(u) < 0.5 * y) & (np.abs(u) < 0.5 * (1.0 - y))
    yn, un = y[near], u[near]
    # the first-order terms cancel analytically here
    out[near] = -yn * _log1pmx(un / yn) - (1.0 - yn) * _log1pmx(-un / (1.0 - yn))
    return out


def _deviance_residuals(y, model, shots):
    m = np.clip(model, 1e-12, 1.0 - 1e-12)
    d = 2.0 * shots * _half_deviance(y, m)
    return np.sign(m - y) * np.sqrt(np.clip(d, 0.0, None))


def _gradient_measure(J, r, p, lo, hi):
    """Largest cosine between a Jacobian column and the residual, ignoring
    components blocked by an active bound."""
    g = J.T @ r
    blocked = ((p <= lo) & (g > 0)) | ((p >= hi) & (g < 0))
    rn = np.linalg.norm(r)
    if rn == 0.0:
        return 0.0
    cn = np.linalg.norm(J, axis=0)
    cos = np.where(cn > 0, np.abs(g) / (np.where(cn > 0, cn, 1.0) * rn), 0.0)
    cos[blocked] = 0.0
    return float(cos.max()) if cos.size else 0.0


def _levenberg_marquardt(obj: _Objective, p0, max_iter, gtol, ftol, xtol):
    lo, hi = obj.lo, obj.hi
    p = np.clip(np.asarray(p0, dtype=float), lo, hi)
    r = obj.residuals(p)
    chi2 = float(r @ r)
    lam = 1e-3
    history = [chi2]
    message = "maximum iterations reached"
    it = 0
    for it in range(1, max_iter + 1):
        if chi2 <= 1e-28 * r.size:
            message = "zero residual"
            break
        J = obj.jacobian(p, r)
        if _gradient_measure(J, r, p, lo, hi) <= gtol:
            message = "gradient criterion met"
            break
        g_full = J.T @ r
        # parameters pinned at a bound and pushed outward stay fixed this step
        active = ~(((p <= lo) & (g_full > 0)) | ((p >= hi) & (g_full < 0)))
        Ja = J[:, active]
        A = Ja.T @ Ja
        g = g_full[active]
        dA = np.diag(A).copy()
        dA[dA <= 0] = max(dA.max(initial=0.0), 1.0) * 1e-12
        accepted = False
        while lam <= 1e16:
            try:
                delta_a = np.linalg.solve(A + lam * np.diag(dA), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            delta = np.zeros_like(p)
            delta[active] = delta_a
            p_new = np.clip(p + delta, lo, hi)
            r_new = obj.residuals(p_new)
            chi2_new = float(r_new @ r_new)
            if chi2_new < chi2:
                accepted = True
                lam = max(lam / 10.0, 1e-12)
                break
            lam *= 10.0
        if not accepted:
            message = "no further decrease possible"
            break
        step = np.linalg.norm((p_new - p) / (hi - lo))
        drop = chi2 - chi2_new
        p, r, chi2 = p_new, r_new, chi2_new
        history.append(chi2)
        if drop <= ftol * chi2 or step <= xtol:
            message = "relative change below tolerance"
            break
    return p, r, chi2, it, message, history


def _start_grid(problem, obj, n_refine):
    """Problem initial values plus the best ``n_refine`` points of a 3-per-axis grid."""
    starts = [np.array([p.initial for p in problem.free])]
    axes = [p.lower + (p.upper - p.lower) * np.array([1 / 6, 1 / 2, 5 / 6]) for p in problem.free]
    scored = []
    for point in itertools.product(*axes):
        q = np.array(point)
        r = obj.residuals(q)
        c = float(r @ r)
        scored.append((c if math.isfinite(c) else math.inf, len(scored), q))
    scored.sort(key=lambda t: (t[0], t[1]))
    starts.extend(q for _, _, q in scored[:n_refine])
    return starts


def _rank_check(J, names, lo, hi, rcond=1e-8):
    Js = J * (hi - lo)
    if Js.shape[1] == 0:
        return
    u, s, vt = np.linalg.svd(Js, full_matrices=False)
    if s[0] == 0.0 or s[-1] <= rcond * s[0]:
        v = np.abs(vt[-1])
        order = np.argsort(-v)
        pair = tuple(names[i] for i in order[:2]) if len(names) > 1 else (names[0],)
        raise RankDeficiencyError(
            f"singular Jacobian: parameters {pair} are degenerate "
            f"(condition {s[-1] / s[0] if s[0] else 0.0:.2e})",
            pair,
        )


def least_squares(problem: FitProblem, max_iter: int = 200, multistart: bool = True,
                  n_refine: int = 3, gtol: float = 1e-6, ftol: float = 1e-10,
                  xtol: float = 1e-10) -> FitResult:
    """Minimize the weighted sum of squared residuals.

    With ``multistart`` the objective is scanned on a 3-point grid per free
    parameter and the iteration is run from the problem's initial values and
    from the ``n_refine`` best grid points; the lowest final chi-square wins.
    Uncertainties are from ``inv(J^T J)`` scaled by the reduced chi-square.
    Raises :class:`RankDeficiencyError` when the Jacobian at the optimum is
    singular. ``history`` holds the chi-square after each accepted step of
    the winning start.
    """
    obj = _Objective(problem)
    starts = _start_grid(problem, obj, n_refine) if multistart else [
        np.array([p.initial for p in problem.free])
    ]
    best = None
    for p0 in starts:
        out = _levenberg_marquardt(obj, p0, max_iter, gtol, ftol, xtol)
        if best is None or out[2] < best[2]:
            best = out
    p, r, chi2, iterations, message, history = best

    names = problem.names
    n, k = r.size, p.size
    J = obj.jacobian(p, r)
    zero = chi2 <= 1e-28 * n
    _rank_check(J, names, obj.lo, obj.hi)
    gmeasure = _gradient_measure(J, r, p, obj.lo, obj.hi)
    converged = bool(zero or gmeasure <= max(gtol, 1e-4))

    dof = max(n - k, 1)
    try:
        cov = np.linalg.inv(J.T @ J) * (chi2 / dof)
    except np.linalg.LinAlgError:
        cov = np.full((k, k), np.nan)
    err = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return FitResult(
        estimates=dict(zip(names, map(float, p))),
        uncertainties=dict(zip(names, map(float, err))),
        residual_rms=float(math.sqrt(np.mean((obj.model(p) - obj.y) ** 2))),
        iterations=int(iterations),
        converged=converged,
        chi2=chi2,
        message=f"{message}; gradient measure {gmeasure:.2e}",
        covariance=cov,
        history=history,
    )


def binomial_sigma(p, shots):
    """Projection-noise error ``sqrt(p (1 - p) / N)`` floored at ``0.5 / N``."""
    p = np.asarray(p, dtype=float)
    shots = np.asarray(shots, dtype=float)
    return np.maximum(np.sqrt(np.clip(p * (1 - p), 0, None) / shots), 0.5 / shots)


# -------------------------------------------------------- GSD profile model

@dataclass(frozen=True, eq=False)
class GsdContext:
    """Everything a GSD profile model needs besides the fitted parameters.

    ``state`` supplies the fixed radial phonon numbers; its axial value is
    replaced by the fitted ``nbar_z``. Profiles are beam scans along y_B
    with the ion displaced by ``ion_offset`` along z_t.
    """

    beam: BeamSpec
    pulse: PulseSpec
    trap: TrapSpec
    state: ThermalState
    frames: FrameSet = field(default_factory=default_frames)
    ion_offset: float = 0.0
    variant: DephasingVariant = DephasingVariant.ETA_SQUARED
    method: str = "projected"
    grid: GridSpec = GridSpec()
    points: int = 24
    convolve: bool = True

    def without_convolution(self) -> "GsdContext":
        return replace(self, convolve=False)

    @property
    def sigma0_z(self) -> float:
        return float(ground_state_width(self.trap.mass, self.trap.omega_z))


def gsd_profile_model(params: Mapping[str, float], coordinate, context: GsdContext):
    """Depletion probability along a y_B beam scan.

    Recognised parameters: ``nbar_z`` or ``sigma_z`` (axial size), ``power``
    and ``offset`` (shift of the scan coordinate). Missing ones default to
    the context values and zero offset.
    """
    coordinate = np.asarray(coordinate, dtype=float)
    if "sigma_z" in params:
        nbar_z = float(nbar_for_width(params["sigma_z"], context.sigma0_z))
    else:
        nbar_z = float(params.get("nbar_z", context.state.nbar_z))
    state = context.state.with_axial(max(nbar_z, 0.0))
    beam = context.beam.with_power(params.get("power", context.beam.power))
    offset = float(params.get("offset", 0.0))
    frames = context.frames
    a_dir, b_dir = _scan_directions(frames)
    wp = thermal_wavepacket(context.trap, state, context.ion_offset * b_dir)
    shifts = np.outer(coordinate - offset, a_dir)

    if not context.convolve:
        beta = _beta_for(beam, context.trap, state, frames, context.variant)
        emap = ExcitationMap(beam, context.pulse.tau, beta)
        t = _transverse_offset(beam, wp, frames) - shifts
        return emap.at_r2(t[:, 0] ** 2 + t[:, 1] ** 2)
    if context.method == "projected":
        return convolve_projected(beam, context.pulse, context.trap, state, wp, frames,
                                  beam_offsets=shifts, points=context.points,
                                  variant=context.variant)
    if context.method == "grid":
        out = np.empty(coordinate.size)
        for i, s in enumerate(shifts):
            out[i] = convolve_grid(beam.shifted(s), context.pulse, context.trap, state, wp,
                                   context.grid, frames, context.variant)
        return out
    raise DomainError(f"unknown method {context.method!r}")


DEFAULT_GSD_BOUNDS = {
    "nbar_z": (0.0, 30.0),
    "power": (0.1e-3, 5e-3),
    "offset": (-150e-9, 150e-9),
}


def gsd_problem(data: Profile, context: GsdContext, initial=None, bounds=None,
                free=("nbar_z", "power", "offset")) -> FitProblem:
    """Fit problem with the axial phonon number, power and offset free."""
    bounds = {**DEFAULT_GSD_BOUNDS, **(bounds or {})}
    guess = {"nbar_z": context.state.nbar_z, "power": context.beam.power, "offset": 0.0}
    guess.update(initial or {})
    params = []
    for name in free:
        lo, hi = bounds[name]
        params.append(FreeParameter(name, float(np.clip(guess[name], lo, hi)), lo, hi))
    return FitProblem(
        data=data,
        model=lambda p, x: gsd_profile_model(p, x, context),
        free=params,
        name="gsd_profile",
    )


def sigma_z_estimate(result: FitResult, context: GsdContext) -> Estimate:
    """Axial wave-packet size implied by a fitted ``nbar_z``, with propagated error."""
    nbar = result.estimates["nbar_z"]
    dn = result.uncertainties.get("nbar_z", 0.0)
    s0 = context.sigma0_z
    sigma = float(thermal_width(s0, nbar))
    return Estimate(sigma, float(s0 / math.sqrt(2 * nbar + 1) * dn))


def fit_gsd_profile(data: Profile, context: GsdContext, shots=None, **kw) -> FitResult:
    """Fit ``nbar_z``, power and offset; adds ``sigma_z`` to ``derived``.

    With ``shots`` the fit maximizes the binomial likelihood of the
    observed frequencies. Without it, ``data.sigma`` (or unit weights) sets
    a Gaussian least-squares fit.
    """
    opts = {k: kw.pop(k) for k in ("initial", "bounds", "free") if k in kw}
    if shots is not None and not shots >= 1:
        raise DomainError("shots must be >= 1")
    if shots is not None:
        data = Profile(data.coordinate, data.value)
    problem = gsd_problem(data, context, **opts)
    problem.shots = shots
    res = least_squares(problem, **kw)
    if "nbar_z" in res.estimates:
        res.derived["sigma_z"] = sigma_z_estimate(res, context)
    return res


# --------------------------------------------------------------- Lorentzian

def lorentzian(params, x):
    A, x0, g, b = params["amplitude"], params["center"], params["gamma"], params["background"]
    x = np.asarray(x, dtype=float)
    return A * g * g / ((x - x0) ** 2 + g * g) + b


def fit_lorentzian(spectrum: Profile, **kw) -> FitResult:
    """Fit ``A g^2 / ((x - x0)^2 + g^2) + b``.

    ``derived["peak"]`` holds ``A + b``, the excitation on resonance.
    """
    x, y = spectrum.coordinate, spectrum.value
    if x.size < 5:
        raise DomainError("a Lorentzian fit needs at least 5 points")
    lo_x, hi_x = float(x.min()), float(x.max())
    span = hi_x - lo_x
    step = float(np.min(np.abs(np.diff(x))))
    b0 = float(np.min(y))
    A0 = float(np.max(y)) - b0
    x00 = float(x[np.argmax(y)])
    above = x[y >= b0 + 0.5 * A0] if A0 > 0 else x[:1]
    g0 = max(0.5 * float(above.max() - above.min()), step)
    params = [
        FreeParameter("amplitude", min(max(A0, 1e-3), 1.5), 0.0, 1.5),
        FreeParameter("center", x00, lo_x, hi_x),
        FreeParameter("gamma", min(g0, span), step / 20.0, span),
        FreeParameter("background", min(max(b0, -0.1), 0.9), -0.1, 1.0),
    ]
    problem = FitProblem(spectrum, lorentzian, params, name="lorentzian")
    res = least_squares(problem, **kw)
    names = problem.names
    ia, ib = names.index("amplitude"), names.index("background")
    cov = res.covariance
    var = cov[ia, ia] + cov[ib, ib] + 2 * cov[ia, ib] if cov is not None else 0.0
    res.derived["peak"] = Estimate(res.estimates["amplitude"] + res.estimates["background"],
                                   float(math.sqrt(max(var, 0.0))))
    return res
