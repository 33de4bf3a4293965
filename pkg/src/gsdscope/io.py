"""Configuration ingestion and the CSV / PGM / JSON file formats.

Floats are written with ``repr`` so every emitted CSV parses back to the
identical binary values.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .beam import BeamShape, BeamSpec
from .dynamics import DephasingVariant, PulseSpec
from .errors import ConfigError, DomainError, GsdError, QuantityParseError
from .geometry import FrameSet, default_frames
from .imaging import GridSpec, ImageGrid, Profile, ScanSpec
from .units import (
    CONSTANTS,
    ThermalState,
    TransitionSpec,
    TrapSpec,
    default_transition,
    default_trap,
    doppler_state,
    parse_quantity,
)

__all__ = [
    "RunConfig",
    "load_config",
    "parse_config",
    "read_profile",
    "write_profile",
    "read_image",
    "write_image",
    "write_pgm",
    "read_spectrum",
    "write_spectrum",
    "add_shot_noise",
]

PROFILE_HEADER = "# gsdscope profile v1"
IMAGE_HEADER = "# gsdscope image v1"
SPECTRUM_COLUMNS = ("detuning_hz", "p_d", "shots")


# -------------------------------------------------------------------- config

_SCHEMA = {
    "transition": {"wavelength": "m", "lifetime": "s", "linewidth": "Hz"},
    "trap": {"mass_amu": "", "omega_x": "rad/s", "omega_y": "rad/s", "omega_z": "rad/s"},
    "state": {"nbar_x": "", "nbar_y": "", "nbar_z": ""},
    "beam": {"shape": str, "power": "W", "waist": "m"},
    "pulse": {"tau": "s"},
    "frames": {"trap_to_lab": list, "beam_to_lab": list, "propagation_axis": int},
    "grid": {"points": int, "extent": "m"},
    "scan": {"a_start": "m", "a_stop": "m", "a_pixels": int, "b_start": "m",
             "b_stop": "m", "b_pixels": int, "method": str, "shots": int},
    "fit": {"free": list, "ion_offset": "m", "rows": int, "variant": str,
            "nbar_z": "", "power": "W", "offset": "m", "shots": int},
    "budget": {"w0": "m", "tau": "s", "theta_B_deg": "", "gamma_pol": "",
               "pol_error": "", "delta": "rad/s", "leakage_factor": "",
               "p_max": "", "gamma_convention": str},
    "output": {"dir": str, "prefix": str, "pgm": bool},
}
_TOP_SCALARS = {"seed": int}


@dataclass
class RunConfig:
    """Parsed configuration; every value is in SI units."""

    transition: TransitionSpec = field(default_factory=default_transition)
    trap: TrapSpec = field(default_factory=default_trap)
    state: ThermalState = field(default_factory=doppler_state)
    beam: BeamSpec | None = None
    pulse: PulseSpec | None = None
    frames: FrameSet = field(default_factory=default_frames)
    grid: GridSpec = field(default_factory=GridSpec)
    scan: ScanSpec | None = None
    scan_options: dict = field(default_factory=dict)
    fit: dict = field(default_factory=dict)
    budget: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 0
    raw: dict = field(default_factory=dict)


def _value(path, raw, kind):
    if kind is str:
        if not isinstance(raw, str):
            raise ConfigError(f"{path}: expected a string", path)
        return raw
    if kind is bool:
        if not isinstance(raw, bool):
            raise ConfigError(f"{path}: expected true/false", path)
        return raw
    if kind is int:
        if isinstance(raw, bool) or not isinstance(raw, int):
            raise ConfigError(f"{path}: expected an integer", path)
        return raw
    if kind is list:
        if not isinstance(raw, list):
            raise ConfigError(f"{path}: expected a list", path)
        return raw
    try:
        return float(parse_quantity(raw, kind).value)
    except QuantityParseError as exc:
        raise ConfigError(f"{path}: {exc}", path) from exc


def _section(doc, name):
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: expected an object", name)
    out = {}
    for key, raw in sec.items():
        path = f"{name}.{key}"
        if key not in _SCHEMA[name]:
            raise ConfigError(f"unknown key {path!r}", path)
        out[key] = _value(path, raw, _SCHEMA[name][key])
    return out


def _build(name, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except (GsdError, TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}", name) from exc


def parse_config(doc: dict) -> RunConfig:
    """Validate a config document. Unknown keys raise :class:`ConfigError`."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object", "")
    for key in doc:
        if key not in _SCHEMA and key not in _TOP_SCALARS:
            raise ConfigError(f"unknown key {key!r}", key)
    cfg = RunConfig(raw=json.loads(json.dumps(doc)))
    if "seed" in doc:
        cfg.seed = _value("seed", doc["seed"], int)
        if not 0 <= cfg.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer", "seed")

    t = _section(doc, "transition")
    if t:
        if "lifetime" in t and "linewidth" in t:
            raise ConfigError("transition: give lifetime or linewidth, not both",
                              "transition.linewidth")
        wl = t.get("wavelength", 729e-9)
        if "lifetime" in t:
            cfg.transition = _build("transition",
                                    lambda: TransitionSpec.from_lifetime(wl, t["lifetime"]))
        else:
            lw = t.get("linewidth", default_transition().linewidth)
            cfg.transition = _build("transition", lambda: TransitionSpec(wl, lw))

    tr = _section(doc, "trap")
    if tr:
        d = default_trap()
        cfg.trap = _build("trap", lambda: TrapSpec.from_amu(
            tr.get("mass_amu", d.mass / CONSTANTS.atomic_mass_unit),
            tr.get("omega_x", d.omega_x), tr.get("omega_y", d.omega_y),
            tr.get("omega_z", d.omega_z)))

    st = _section(doc, "state")
    if st:
        d = doppler_state()
        cfg.state = _build("state", lambda: ThermalState(
            st.get("nbar_x", d.nbar_x), st.get("nbar_y", d.nbar_y), st.get("nbar_z", d.nbar_z)))

    b = _section(doc, "beam")
    if b:
        missing = {"power", "waist"} - set(b)
        if missing:
            raise ConfigError(f"beam: missing {sorted(missing)}", f"beam.{sorted(missing)[0]}")
        cfg.beam = _build("beam", lambda: BeamSpec(
            BeamShape(b.get("shape", "vortex")), b["power"], b["waist"], cfg.transition))

    p = _section(doc, "pulse")
    if p:
        if "tau" not in p:
            raise ConfigError("pulse: missing 'tau'", "pulse.tau")
        cfg.pulse = _build("pulse", lambda: PulseSpec(p["tau"]))

    f = _section(doc, "frames")
    if f:
        d = default_frames()
        cfg.frames = _build("frames", lambda: FrameSet(
            np.array(f.get("trap_to_lab", d.trap_to_lab), dtype=float),
            np.array(f.get("beam_to_lab", d.beam_to_lab), dtype=float),
            f.get("propagation_axis", 2)))

    g = _section(doc, "grid")
    if g:
        cfg.grid = _build("grid", lambda: GridSpec(g.get("points", 128), g.get("extent", 1e-6)))

    s = _section(doc, "scan")
    if s:
        geo = {k: s[k] for k in ("a_start", "a_stop", "a_pixels", "b_start", "b_stop",
                                 "b_pixels") if k in s}
        if len(geo) != 6:
            missing = sorted(set(("a_start", "a_stop", "a_pixels", "b_start", "b_stop",
                                  "b_pixels")) - set(geo))
            raise ConfigError(f"scan: missing {missing}", f"scan.{missing[0]}")
        cfg.scan = _build("scan", lambda: ScanSpec(**geo))
        cfg.scan_options = {k: s[k] for k in ("method", "shots") if k in s}
        if cfg.scan_options.get("method", "projected") not in ("projected", "grid"):
            raise ConfigError("scan.method must be 'projected' or 'grid'", "scan.method")

    cfg.fit = _section(doc, "fit")
    if "variant" in cfg.fit:
        cfg.fit["variant"] = _build("fit", lambda: DephasingVariant(cfg.fit["variant"]))
    cfg.budget = _section(doc, "budget")
    cfg.output = _section(doc, "output")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", str(path)) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})",
                          str(path)) from exc
    return parse_config(doc)


# ---------------------------------------------------------------------- CSV

def _r(x):
    return repr(float(x))


def _data_lines(path, header):
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != header:
        raise ConfigError(f"{path}: first line must be {header!r}", str(path))
    return lines[1:]


def _rows(path, lines, columns, optional=()):
    reader = csv.reader(l for l in lines if l.strip())
    head = next(reader, None)
    allowed = (list(columns), list(columns) + list(optional))
    if head is None or [h.strip() for h in head] not in allowed:
        raise ConfigError(f"{path}: expected columns {','.join(columns + tuple(optional))}",
                          str(path))
    out = []
    for i, row in enumerate(reader, start=2):
        if len(row) != len(head):
            raise ConfigError(f"{path}: row {i} has {len(row)} fields, expected {len(head)}",
                              f"{path}:{i}")
        try:
            out.append([float(v) for v in row])
        except ValueError as exc:
            raise ConfigError(f"{path}: row {i}: {exc}", f"{path}:{i}") from exc
    return len(head), np.array(out, dtype=float).reshape(-1, len(head))


def write_profile(path, profile: Profile):
    cols = "coord_m,p_d" + (",sigma_p" if profile.sigma is not None else "")
    lines = [PROFILE_HEADER, cols]
    for i in range(len(profile)):
        vals = [profile.coordinate[i], profile.value[i]]
        if profile.sigma is not None:
            vals.append(profile.sigma[i])
        lines.append(",".join(_r(v) for v in vals))
    Path(path).write_text("\n".join(lines) + "\n")


def read_profile(path) -> Profile:
    """Parse a profile CSV; probabilities must lie in [0, 1]."""
    ncol, a = _rows(path, _data_lines(path, PROFILE_HEADER), ("coord_m", "p_d"), ("sigma_p",))
    if a.shape[0] < 2:
        raise ConfigError(f"{path}: a profile needs at least two rows", str(path))
    if np.any(~np.isfinite(a)) or np.any(a[:, 1] < 0) or np.any(a[:, 1] > 1):
        raise ConfigError(f"{path}: p_d values must be finite and lie in [0, 1]", str(path))
    try:
        return Profile(a[:, 0], a[:, 1], a[:, 2] if ncol == 3 else None)
    except DomainError as exc:
        raise ConfigError(f"{path}: {exc}", str(path)) from exc


def write_image(path, image: ImageGrid):
    lines = [IMAGE_HEADER, "y_B_m,z_t_m,p_d"]
    for j, b in enumerate(image.b_coords):
        for i, a in enumerate(image.a_coords):
            lines.append(f"{_r(a)},{_r(b)},{_r(image.values[j, i])}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_image(path) -> ImageGrid:
    """Parse an image CSV written row by row (z_t outer, y_B inner)."""
    _, arr = _rows(path, _data_lines(path, IMAGE_HEADER), ("y_B_m", "z_t_m", "p_d"))
    a = np.unique(arr[:, 0])
    b = np.unique(arr[:, 1])
    if a.size * b.size != arr.shape[0]:
        raise ConfigError(f"{path}: rows do not form a complete grid", str(path))
    a_first = arr[: a.size, 0]
    b_rows = arr[:: a.size, 1]
    try:
        return ImageGrid(arr[:, 2].reshape(b.size, a.size), a_first, b_rows)
    except DomainError as exc:
        raise ConfigError(f"{path}: {exc}", str(path)) from exc


def write_pgm(path, image: ImageGrid):
    """Plain P2 greymap, ``round(255 p)``, one image row per b coordinate."""
    px = np.rint(255.0 * image.values).astype(int)
    h, w = px.shape
    lines = ["P2", f"{w} {h}", "255"]
    lines.extend(" ".join(str(v) for v in row) for row in px)
    Path(path).write_text("\n".join(lines) + "\n")


def write_spectrum(path, detuning, p_d, shots):
    lines = [",".join(SPECTRUM_COLUMNS)]
    shots = np.broadcast_to(np.asarray(shots), np.shape(detuning))
    for d, p, n in zip(detuning, p_d, shots):
        lines.append(f"{_r(d)},{_r(p)},{int(n)}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_spectrum(path):
    """Return ``(profile, shots)``; ``profile.sigma`` holds binomial errors."""
    from .fitting import binomial_sigma

    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", str(path)) from exc
    _, a = _rows(path, lines, SPECTRUM_COLUMNS)
    if a.shape[0] < 2:
        raise ConfigError(f"{path}: a spectrum needs at least two rows", str(path))
    if np.any(a[:, 1] < 0) or np.any(a[:, 1] > 1) or np.any(a[:, 2] < 1):
        raise ConfigError(f"{path}: p_d must lie in [0, 1] and shots be >= 1", str(path))
    try:
        prof = Profile(a[:, 0], a[:, 1], binomial_sigma(a[:, 1], a[:, 2]))
    except DomainError as exc:
        raise ConfigError(f"{path}: {exc}", str(path)) from exc
    return prof, a[:, 2].astype(int)


# -------------------------------------------------------------------- noise

def add_shot_noise(data, shots: int, seed: int):
    """Resample every probability as ``Binomial(shots, p) / shots``.

    Works on a :class:`Profile`, an :class:`ImageGrid` or a plain array and
    returns the same type. Profiles get binomial ``sigma`` values.
    """
    from .fitting import binomial_sigma

    if isinstance(shots, bool) or int(shots) != shots or shots < 1:
        raise DomainError("shots must be a positive integer")
    shots = int(shots)
    rng = np.random.default_rng(seed)

    def resample(p):
        p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
        return rng.binomial(shots, p) / shots

    if isinstance(data, Profile):
        v = resample(data.value)
        return Profile(data.coordinate.copy(), v, binomial_sigma(v, shots))
    if isinstance(data, ImageGrid):
        prov = dict(data.provenance)
        prov["shot_noise"] = {"shots": shots, "seed": seed}
        return ImageGrid(resample(data.values), data.a_coords.copy(), data.b_coords.copy(), prov)
    return resample(data)


def isfinite_json(obj):
    """Replace non-finite floats by ``None`` so the output is strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: isfinite_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [isfinite_json(v) for v in obj]
    return obj
