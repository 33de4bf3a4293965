"""``gsdscope`` command-line interface.

Exit codes: 0 success, 2 configuration or parse error, 3 numerical or
accuracy error, 4 fit non-convergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .beam import BeamShape, BeamSpec
from .budget import (
    GammaConvention,
    SetupSpec,
    budget_csv,
    budget_table,
    format_budget,
)
from .dynamics import DephasingVariant, Estimate, PulseSpec, nbar_from_sideband_ratio
from .errors import AccuracyError, ConfigError, DomainError, GsdError, QuantityParseError
from .fitting import GsdContext, fit_gsd_profile, fit_lorentzian
from .imaging import EpsfMode, epsf_profile, scan_image
from .io import (
    add_shot_noise,
    isfinite_json,
    load_config,
    parse_config,
    read_profile,
    read_spectrum,
    write_image,
    write_pgm,
    write_profile,
)
from .units import ThermalState, parse_quantity

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_FIT = 0, 2, 3, 4


class _Fail(Exception):
    def __init__(self, code, message, payload=None):
        super().__init__(message)
        self.code = code
        self.payload = payload


def threads() -> int:
    """Parallelism cap from ``GSDSCOPE_THREADS`` (default: available cores)."""
    raw = os.environ.get("GSDSCOPE_THREADS")
    if raw is None:
        return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"GSDSCOPE_THREADS must be a positive integer, got {raw!r}",
                          "GSDSCOPE_THREADS") from None
    if n < 1:
        raise ConfigError("GSDSCOPE_THREADS must be >= 1", "GSDSCOPE_THREADS")
    return n


def _quantity(flag, unit):
    def parse(text):
        try:
            return float(parse_quantity(text, unit).value)
        except QuantityParseError as exc:
            raise argparse.ArgumentTypeError(f"{flag}: {exc}") from None
    parse.__name__ = f"quantity in {unit or 'dimensionless'}"
    return parse


def _nonneg(flag):
    def parse(text):
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag}: not a number: {text!r}") from None
        if not math.isfinite(v) or v < 0:
            raise argparse.ArgumentTypeError(f"{flag}: must be >= 0")
        return v
    return parse


def _write_json(path, obj):
    text = json.dumps(isfinite_json(obj), indent=2, sort_keys=True) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _sidecar(path) -> Path:
    return Path(str(path) + ".provenance.json")


def _config(args):
    if getattr(args, "config", None):
        return load_config(args.config)
    return parse_config({})


# ------------------------------------------------------------------ commands

def cmd_epsf(args) -> int:
    cfg = _config(args)
    beam = BeamSpec(BeamShape(args.beam), args.power, args.waist, cfg.transition)
    radii = np.linspace(0.0, 1.5 * beam.waist, args.points) if args.points else None
    if args.exact or args.nbar_ax is not None or args.nbar_rad is not None:
        d = cfg.state
        rad = (args.nbar_rad, args.nbar_rad) if args.nbar_rad is not None else (d.nbar_x, d.nbar_y)
        ax = args.nbar_ax if args.nbar_ax is not None else d.nbar_z
        prof = epsf_profile(beam, PulseSpec(args.tau), cfg.trap, ThermalState(*rad, ax),
                            EpsfMode.THERMAL_CLOSED_FORM, radii=radii, frames=cfg.frames)
    else:
        prof = epsf_profile(beam, PulseSpec(args.tau), mode=EpsfMode.POINT_ION, radii=radii)
    write_profile(args.out or "epsf.csv", prof)
    return EXIT_OK


def cmd_scan(args) -> int:
    cfg = load_config(args.config)
    if cfg.scan is None or cfg.beam is None or cfg.pulse is None:
        raise ConfigError("scan needs 'scan', 'beam' and 'pulse' sections", "scan")
    beam, state = cfg.beam, cfg.state
    if args.power is not None:
        beam = beam.with_power(args.power)
    if args.nbar_ax is not None:
        state = state.with_axial(args.nbar_ax)
    seed = args.seed if args.seed is not None else cfg.seed
    shots = args.shots if args.shots is not None else cfg.scan_options.get("shots")
    method = args.method or cfg.scan_options.get("method", "projected")
    image = scan_image(cfg.scan, beam, cfg.pulse, cfg.trap, state, cfg.grid, cfg.frames,
                       method=method)
    if shots:
        image = add_shot_noise(image, shots, seed)

    out_dir = Path(args.out_dir or cfg.output.get("dir", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = out_dir / (args.prefix or cfg.output.get("prefix", "scan"))
    csv_path = stem.with_suffix(".csv")
    write_image(csv_path, image)
    if args.pgm or cfg.output.get("pgm", False):
        write_pgm(stem.with_suffix(".pgm"), image)
    _write_json(_sidecar(csv_path), {
        "command": "scan",
        "version": __version__,
        "config": cfg.raw,
        "overrides": {"power": args.power, "nbar_ax": args.nbar_ax, "shots": args.shots,
                      "method": args.method, "seed": args.seed},
        "seed": seed,
        "threads": threads(),
        "resolved": image.provenance,
    })
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    if cfg.beam is None or cfg.pulse is None:
        raise ConfigError("fit needs 'beam' and 'pulse' sections", "beam")
    data = read_profile(args.data)
    fit_opts = cfg.fit
    free = tuple(args.free.split(",")) if args.free else tuple(
        fit_opts.get("free", ("nbar_z", "power", "offset")))
    unknown = set(free) - {"nbar_z", "power", "offset"}
    if unknown:
        raise ConfigError(f"unknown free parameter(s) {sorted(unknown)}", "fit.free")
    context = GsdContext(
        beam=cfg.beam, pulse=cfg.pulse, trap=cfg.trap, state=cfg.state, frames=cfg.frames,
        ion_offset=fit_opts.get("ion_offset", 0.0),
        variant=fit_opts.get("variant", DephasingVariant.ETA_SQUARED),
    )
    initial = {k: fit_opts[k] for k in ("nbar_z", "power", "offset") if k in fit_opts}
    shots = args.shots if args.shots is not None else fit_opts.get("shots")
    try:
        result = fit_gsd_profile(data, context, shots=shots, initial=initial, free=free)
    except DomainError as exc:
        # too few points for the free parameters, or similar input problems
        raise ConfigError(f"{args.data}: {exc}", str(args.data)) from exc
    payload = result.to_dict()
    payload["data"] = str(args.data)
    payload["estimator"] = "binomial_likelihood" if shots else "least_squares"
    if not result.converged:
        raise _Fail(EXIT_FIT, "fit did not converge", payload)
    _write_json(args.out, payload)
    return EXIT_OK


def cmd_thermometry(args) -> int:
    (rsb, _), (bsb, _) = read_spectrum(args.rsb), read_spectrum(args.bsb)
    fits = {}
    for name, spec in (("rsb", rsb), ("bsb", bsb)):
        if name == "rsb" and not np.any(spec.value > 0):
            # nothing to fit: no red-sideband excitation at all
            continue
        try:
            res = fit_lorentzian(spec)
        except GsdError as exc:
            raise _Fail(EXIT_FIT, f"{name} Lorentzian fit failed: {exc}") from exc
        if not res.converged:
            raise _Fail(EXIT_FIT, f"{name} Lorentzian fit did not converge",
                        {name: res.to_dict()})
        fits[name] = res
    p_b = fits["bsb"].derived["peak"]
    p_r = fits["rsb"].derived["peak"] if "rsb" in fits else Estimate(0.0, 0.0)
    payload = {
        "rsb": fits["rsb"].to_dict() if "rsb" in fits else {"peak": 0.0},
        "bsb": fits["bsb"].to_dict(),
        "peak_ratio": p_r.value / p_b.value if p_b.value else None,
    }
    try:
        est = nbar_from_sideband_ratio(max(p_r.value, 0.0), p_b.value,
                                       sigma_rsb=p_r.error, sigma_bsb=p_b.error)
    except DomainError as exc:
        payload["error"] = str(exc)
        raise _Fail(EXIT_FIT, f"thermometry failed: {exc}", payload) from exc
    payload["nbar"] = est.value
    payload["nbar_error"] = est.error
    _write_json(args.out, payload)
    return EXIT_OK


def cmd_budget(args) -> int:
    cfg = _config(args)
    b = dict(cfg.budget)
    p_max = args.p_max if args.p_max is not None else b.pop("p_max", 0.01)
    b.pop("p_max", None)
    kw = {}
    for key, flag in (("w0", args.waist), ("tau", args.tau)):
        kw[key] = flag if flag is not None else b.pop(key, None)
        b.pop(key, None)
    kw["w0"] = kw["w0"] if kw["w0"] is not None else 4.2e-6
    kw["tau"] = kw["tau"] if kw["tau"] is not None else 19e-6
    if "theta_B_deg" in b:
        kw["theta_B"] = math.radians(b.pop("theta_B_deg"))
    if "gamma_convention" in b:
        kw["gamma_convention"] = GammaConvention(b.pop("gamma_convention"))
    try:
        setup = SetupSpec(transition=cfg.transition, **kw, **b)
    except (DomainError, ValueError) as exc:
        raise ConfigError(f"budget: {exc}", "budget") from exc
    entries = budget_table(setup, p_max)
    sys.stdout.write(format_budget(entries))
    if args.csv:
        Path(args.csv).write_text(budget_csv(entries))
    return EXIT_OK


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gsdscope",
                                description="Ground-state-depletion microscopy of a trapped ion.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("epsf", help="point-ion or thermal ePSF radial profile")
    e.add_argument("--waist", required=True, type=_quantity("--waist", "m"))
    e.add_argument("--power", required=True, type=_quantity("--power", "W"))
    e.add_argument("--tau", required=True, type=_quantity("--tau", "s"))
    e.add_argument("--beam", choices=[s.value for s in BeamShape], default="vortex")
    e.add_argument("--nbar-ax", type=_nonneg("--nbar-ax"))
    e.add_argument("--nbar-rad", type=_nonneg("--nbar-rad"))
    e.add_argument("--exact", action="store_true",
                   help="include thermal dephasing (implied by --nbar-ax/--nbar-rad)")
    e.add_argument("--points", type=int, help="number of radii (default 601)")
    e.add_argument("--config", help="JSON config for transition, trap and frames")
    e.add_argument("--out", help="output CSV (default epsf.csv)")
    e.set_defaults(func=cmd_epsf)

    s = sub.add_parser("scan", help="simulate a GSD image")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--shots", type=int)
    s.add_argument("--power", type=_quantity("--power", "W"))
    s.add_argument("--nbar-ax", type=_nonneg("--nbar-ax"))
    s.add_argument("--method", choices=("projected", "grid"))
    s.add_argument("--pgm", action="store_true", help="also write a PGM image")
    s.add_argument("--out-dir")
    s.add_argument("--prefix")
    s.set_defaults(func=cmd_scan)

    f = sub.add_parser("fit", help="fit a measured GSD profile")
    f.add_argument("data")
    f.add_argument("--config", required=True)
    f.add_argument("--free", help="comma separated subset of nbar_z,power,offset")
    f.add_argument("--shots", type=int,
                   help="shots per point; switches to the binomial likelihood fit")
    f.add_argument("--out", help="result JSON (default stdout)")
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("thermometry", help="mean phonon number from sideband spectra")
    t.add_argument("rsb")
    t.add_argument("bsb")
    t.add_argument("--out", help="result JSON (default stdout)")
    t.set_defaults(func=cmd_thermometry)

    b = sub.add_parser("budget", help="parasitic-excitation error budget")
    b.add_argument("--config")
    b.add_argument("--p-max", type=float)
    b.add_argument("--waist", type=_quantity("--waist", "m"))
    b.add_argument("--tau", type=_quantity("--tau", "s"))
    b.add_argument("--csv", help="also write the table as CSV")
    b.set_defaults(func=cmd_budget)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        threads()
        return args.func(args)
    except _Fail as exc:
        print(f"gsdscope {args.command}: {exc}", file=sys.stderr)
        if exc.payload is not None:
            _write_json(getattr(args, "out", None), exc.payload)
        return exc.code
    except (ConfigError, QuantityParseError) as exc:
        print(f"gsdscope {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AccuracyError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"gsdscope {args.command}: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, GsdError) as exc:
        print(f"gsdscope {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"gsdscope {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
