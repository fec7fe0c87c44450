"""Command-line front end: ``wdl <command> [options]``.

Every flag mirrors a key of the flat ``key=value`` config file passed with
``--config``; flags win over the file, and the file wins over defaults.
Outputs are CSV files plus ``<command>_summary.json`` in ``--out-dir``.
"""

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import acceptance
from .analysis import SHARPNESS_HEADER, sharpness_report
from .discretize import (DampingProfile, GridSpec, assemble_generator_2d, assemble_transverse,
                         generator_spectrum, gram_condition, peak_envelope_fit, quotient_sweep,
                         resolvent_scan)
from .errors import ConfigError, InsufficientData, WDLError
from .evolve import decay_fit, evolve, mode_initial_data, smooth_initial_data
from .io import read_config, write_csv
from .modes import CSV_HEADER, continue_infinite_mode, solve_cap_mode, strip_mode, sweep

COMMANDS = ("modes", "qep-oracle", "spectrum", "resolvent", "impedance", "evolve", "sharpness",
            "all")

DEFAULTS = {
    "geometry": "Strip2D", "family": "cap", "nu": 0.0, "m": 1, "d": 2, "k": 20.0,
    "k_min": 20.0, "k_max": 200.0, "nx": 40, "ny": 40, "a": 1.0, "b": 0.0,
    "cap_bc": "Neumann", "lambda_min": 5.0, "lambda_max": 60.0, "lambda_steps": 1101,
    "n_trials": 50, "t": 10.0, "dt": 0.0, "seed": 0, "out_dir": ".", "initial": "smooth",
    "record_every": 1, "quick": False,
}

_TYPES = {"nu": float, "m": int, "d": int, "k": float, "k_min": float, "k_max": float, "nx": int,
          "ny": int, "a": float, "b": float, "lambda_min": float, "lambda_max": float,
          "lambda_steps": int, "n_trials": int, "t": float, "dt": float, "seed": int,
          "record_every": int}

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 2, 3, 4


class _Outputs:
    """Tracks files written by one run so they can be removed on failure."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.paths = []

    def path(self, name):
        p = self.dir / name
        self.paths.append(p)
        return p

    def discard(self):
        for p in self.paths:
            if p.exists():
                p.unlink()


def build_parser():
    parser = argparse.ArgumentParser(prog="wdl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="flat key=value file")
        for key in DEFAULTS:
            flag = "--" + key.replace("_", "-")
            if key == "quick":
                p.add_argument(flag, action="store_true", default=None)
            elif key == "t":
                p.add_argument("--T", "--t", dest="t", default=None)
            else:
                p.add_argument(flag, dest=key, default=None)
    return parser


def resolve_config(args):
    """Merge defaults, the optional config file, and explicit flags, with type coercion."""
    cfg = dict(DEFAULTS)
    if args.config is not None:
        allowed = set(DEFAULTS) | {"T"}
        file_cfg = read_config(args.config, allowed={k.lower() for k in allowed})
        cfg.update(file_cfg)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    for key, cast in _TYPES.items():
        try:
            cfg[key] = cast(cfg[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}={cfg[key]!r} is not a valid {cast.__name__}") from exc
    cfg["quick"] = bool(cfg["quick"])
    cfg["command"] = args.command
    return cfg


def _manifest(cfg):
    """Resolved config for file headers; the output location is not part of the content."""
    return {k: cfg[k] for k in sorted(cfg) if k != "out_dir"}


def _grid(cfg, transverse=False):
    geo = cfg["geometry"]
    if transverse and geo == "Strip2D":
        geo = "Strip1D"
    ny = 0 if transverse or geo != "Strip2D" else cfg["ny"]
    return GridSpec(geo, cfg["nx"], ny, cfg["cap_bc"], cfg["d"])


def _k_range(cfg):
    lo, hi = cfg["k_min"], cfg["k_max"]
    if hi < lo:
        raise ConfigError("k_max must be >= k_min")
    return [float(k) for k in np.arange(lo, hi + 0.5, 1.0)]


def _lambda_grid(cfg):
    if cfg["lambda_steps"] < 2:
        raise ConfigError("lambda_steps must be >= 2")
    return np.linspace(cfg["lambda_min"], cfg["lambda_max"], cfg["lambda_steps"])


def _roots(cfg):
    ks = _k_range(cfg)
    fam = cfg["family"]
    if fam == "cap":
        return sweep(solve_cap_mode, ks, nu=cfg["nu"], m=cfg["m"], a=cfg["a"], b=cfg["b"])
    if fam == "infinite":
        return continue_infinite_mode(cfg["nu"], cfg["m"], ks)
    if fam == "strip":
        return sweep(strip_mode, ks, a=cfg["a"], n=cfg["m"], b=cfg["b"])
    raise ConfigError(f"unknown family {fam!r} (cap, infinite, strip)")


# -- commands ----------------------------------------------------------------------

def cmd_modes(cfg, out):
    roots = _roots(cfg)
    write_csv(out.path("modes.csv"), CSV_HEADER, [r.csv_row() for r in roots], _manifest(cfg))
    return {"rows": len(roots), "max_residual": max(r.residual for r in roots),
            "max_im_lambda": max(r.lam.imag for r in roots)}


def cmd_qep_oracle(cfg, out):
    geo = "Strip1D" if cfg["geometry"] in ("Strip1D", "Strip2D") else cfg["geometry"]
    k = cfg["k"]
    if geo == "Strip1D":
        target = strip_mode(k, a=cfg["a"], b=cfg["b"]).lam
    else:
        target = solve_cap_mode(cfg["nu"], cfg["m"], k, a=cfg["a"], b=cfg["b"]).lam
    nxs = (cfg["nx"], 2 * cfg["nx"], 4 * cfg["nx"])
    vals, order, err, err_x = acceptance.qep_refinement(geo, k, target, nxs)
    ref = target if target.real > 0 else -np.conj(target)
    rows = [(nx, v.real, v.imag, ref.real, ref.imag, abs(v - ref)) for nx, v in zip(nxs, vals)]
    write_csv(out.path("qep.csv"), ("nx", "re_lambda", "im_lambda", "re_root", "im_root", "error"),
              rows, _manifest(cfg))
    return {"order": order, "finest_error": err, "extrapolated_error": err_x}


def _system(cfg):
    grid = _grid(cfg)
    damping = DampingProfile.constant(grid, cfg["a"], cfg["b"])
    if grid.ny:
        return assemble_generator_2d(grid, damping)
    return assemble_transverse(grid, damping, k=cfg["k"])


def cmd_spectrum(cfg, out):
    system = _system(cfg)
    vals = generator_spectrum(system)
    write_csv(out.path("spectrum.csv"), ("re", "im"), [(v.real, v.imag) for v in vals],
              _manifest(cfg))
    return {"eigenvalues": int(vals.size), "max_re": float(vals.real.max()),
            "gram_condition": gram_condition(system)}


def cmd_resolvent(cfg, out):
    system = _system(cfg)
    scan = resolvent_scan(system, _lambda_grid(cfg))
    write_csv(out.path("scan.csv"), ("lambda", "norm"), scan.csv_rows(), _manifest(cfg))
    peaks = [[float(x), float(v)] for x, v in zip(scan.peak_locations, scan.peak_values)]
    result = {"peaks": peaks,
              "singular_points": int(scan.singular.sum())}
    try:
        env = peak_envelope_fit(scan)
    except InsufficientData as exc:
        # the scan is still valid; only the fit needs more peaks
        result.update(envelope_exponent=None, envelope_note=str(exc))
    else:
        result.update(envelope_exponent=env.exponent, envelope_window=list(env.window))
    return result


def cmd_impedance(cfg, out):
    system = _system(cfg)
    lams = _lambda_grid(cfg)
    q = quotient_sweep(system, lams, cfg["n_trials"], cfg["seed"])
    write_csv(out.path("quotient.csv"), ("lambda", "quotient"), list(zip(lams, q)),
              _manifest(cfg))
    return {"sup_quotient": float(q.max())}


def cmd_evolve(cfg, out):
    system = _system(cfg)
    dt = cfg["dt"] if cfg["dt"] > 0 else 0.5 * system.grid.hx
    if cfg["initial"] == "mode":
        if system.grid.geometry.value == "RadialDisk":
            root = solve_cap_mode(cfg["nu"], cfg["m"], cfg["k"], a=cfg["a"], b=cfg["b"])
        else:
            root = strip_mode(cfg["k"], a=cfg["a"], n=cfg["m"], b=cfg["b"])
        w0 = mode_initial_data(system, root)
    elif cfg["initial"] == "smooth":
        w0 = smooth_initial_data(system)
    else:
        raise ConfigError(f"initial must be 'smooth' or 'mode', got {cfg['initial']!r}")
    trace = evolve(system, w0, cfg["t"], dt, record_every=cfg["record_every"])
    write_csv(out.path("trace.csv"), ("t", "energy", "dissipation"), trace.csv_rows(),
              _manifest(cfg))
    summary = {"steps": int(round(cfg["t"] / dt)), "dt": dt, "relative_drift": trace.relative_drift,
               "relative_balance": trace.relative_balance,
               "initial_norms": list(trace.initial_norms)}
    if trace.times.size > 40:
        fit = decay_fit(trace, (trace.times[1], trace.times[-1]))
        summary["decay_exponent"] = fit.exponent
        summary["decay_flags"] = list(fit.flags)
    return summary


def cmd_sharpness(cfg, out):
    report = sharpness_report(_roots(cfg))
    write_csv(out.path("sharpness.csv"), SHARPNESS_HEADER, report.rows, _manifest(cfg))
    return {"exponent": report.exponent_fit.exponent, "band_c": report.band_c,
            "epsilon": report.epsilon, "flagged": len(report.flagged), "notes": report.notes}


def cmd_all(cfg, out):
    results = acceptance.run_all(quick=cfg["quick"], seed=cfg["seed"], echo=print)
    return {"criteria": [r.to_dict() for r in results],
            "passed": all(r.passed for r in results)}


HANDLERS = {"modes": cmd_modes, "qep-oracle": cmd_qep_oracle, "spectrum": cmd_spectrum,
            "resolvent": cmd_resolvent, "impedance": cmd_impedance, "evolve": cmd_evolve,
            "sharpness": cmd_sharpness, "all": cmd_all}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _fail(out, code, category, message):
    out.discard()
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = _Outputs(".")
    try:
        cfg = resolve_config(args)
        out = _Outputs(cfg["out_dir"])
        out.dir.mkdir(parents=True, exist_ok=True)
        result = HANDLERS[cfg["command"]](cfg, out)
        summary = {"command": cfg["command"], "config": _manifest(cfg), "result": result}
        out.path(f"{cfg['command']}_summary.json").write_text(
            json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except WDLError as exc:
        code = EXIT_CONFIG if exc.category in ("config", "domain") else EXIT_NUMERICAL
        return _fail(out, code, exc.category, str(exc))
    except OSError as exc:
        return _fail(out, EXIT_CONFIG, "config", str(exc))
    if cfg["command"] == "all" and not result["passed"]:
        return EXIT_ACCEPTANCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
