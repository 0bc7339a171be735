"""Configuration-driven batch front end.

One subcommand per mode: algebra-check, equivalence, spectrum, evolve,
interfere.  A run reads an optional JSON config file, applies flag
overrides, validates against a closed schema (unknown keys are errors, so
typos cannot silently fall back to defaults), executes the mode, and
writes two artifacts into the output directory:

    <mode>.csv | <mode>.json   the mode's data table
    manifest.json              resolved config, version, invariant checks

Everything physical runs in natural units (hbar = M = 1, lengths in the
user's grid unit); the configured hbar and mass_M only annotate output
units and feed the q/phi -> beta conversion echoed into the manifest.
Data files are deterministic: identical configs give byte-identical
bytes.  The manifest's "run" block (timestamp, wall time) is the one
intentionally nondeterministic part.

Exit codes: 0 success, 1 config/validation failure, 2 numeric failure
(with diagnostics.json written beside the manifest when possible).
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import (BASIS, LieElement, build_rep, central_extension_check,
                      commutator_residual, jacobi_residual, smooth_test_vector)
from .dynamics import (InterferenceGeometry, absorbing_mask, evolve,
                       fringe_sweep, gaussian_packet, sector_family)
from .errors import ConfigError, NumericFailure
from .hamiltonian import RadialGrid, equivalence_check
from .spectral import disk_spectrum

MODES = ("algebra-check", "equivalence", "spectrum", "evolve", "interfere")

# Closed config schema: section -> key -> (type tag, default).  None defaults
# mean "optional, no value"; everything else is echoed into the manifest even
# when the user never set it.
_SCHEMA = {
    "mode": ("str", None),
    "physics": {
        "beta": ("float", None),
        "q": ("float", None),
        "phi": ("float", None),
    },
    "hbar": ("float", 1.0),
    "mass_M": ("float", 1.0),
    "grid": {
        "rho_min": ("float", 1e-6),
        "rho_max": ("float", 1.0),
        "n_points": ("int", 2048),
        "spacing": ("str", "log"),
    },
    "truncation": {
        "m_max": ("int", 2),
        "k_per_sector": ("int", 3),
    },
    "timing": {
        "dt": ("float", 1e-3),
        "T": ("float", 1.0),
        "snapshots": ("int", 9),
    },
    "experiment": {
        "source_radius": ("float", 2.0),
        "source_angle": ("float", 0.0),
        "speed": ("float", 14.0),
        "sigma_radial": ("float", 0.3),
        "sigma_angular": ("float", 0.2),
        "radial_momentum": ("float", 0.0),
        "detector_halfwidth": ("float", 0.45),
        "detector_points": ("int", 512),
        "use_mask": ("bool", False),
        "mask_fraction": ("float", 0.1),
        "sweep_step": ("float", 0.1),
        "sweep_count": ("int", 11),
    },
    "output": {
        "directory": ("str", "."),
        "format": ("str", "csv"),
    },
    "seed": ("int", 7),
}

_COERCE = {
    "float": (lambda v: float(v), (int, float), "number"),
    "int": (lambda v: int(v), (int,), "integer"),
    "str": (lambda v: str(v), (str,), "string"),
    "bool": (lambda v: bool(v), (bool,), "boolean"),
}


def _merge_into(resolved: dict, supplied: dict, schema: dict, prefix: str) -> None:
    for key, value in supplied.items():
        dotted = f"{prefix}{key}"
        if key not in schema:
            raise ConfigError(f"unknown config key {dotted!r}")
        slot = schema[key]
        if isinstance(slot, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{dotted!r} must be an object with keys "
                                  f"{sorted(slot)}")
            _merge_into(resolved[key], value, slot, dotted + ".")
            continue
        tag = slot[0]
        coerce, accepted, label = _COERCE[tag]
        if isinstance(value, bool) and tag != "bool":
            raise ConfigError(f"{dotted!r}: expected {label}, got {value!r}")
        if not isinstance(value, accepted):
            raise ConfigError(f"{dotted!r}: expected {label}, got {value!r}")
        resolved[key] = coerce(value)


def _defaults(schema: dict) -> dict:
    out = {}
    for key, slot in schema.items():
        out[key] = _defaults(slot) if isinstance(slot, dict) else slot[1]
    return out


def resolve_config(mode: str, file_data: dict = None, overrides: dict = None) -> dict:
    """Layer defaults, config file, then flag overrides; validate the result.

    Returns the fully populated nested dict, with physics.beta replaced by
    the value derived from (q, phi) when those were supplied instead.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    resolved = _defaults(_SCHEMA)
    for layer in (file_data or {}, overrides or {}):
        _merge_into(resolved, layer, _SCHEMA, "")
    if resolved["mode"] is not None and resolved["mode"] != mode:
        raise ConfigError(
            f"config key 'mode' says {resolved['mode']!r} but the "
            f"{mode!r} subcommand was invoked")
    resolved["mode"] = mode

    phys = resolved["physics"]
    has_beta = phys["beta"] is not None
    has_q, has_phi = phys["q"] is not None, phys["phi"] is not None
    if has_beta and (has_q or has_phi):
        raise ConfigError(
            "physics.beta conflicts with physics.q/physics.phi: supply "
            "exactly one parameterization")
    if not has_beta:
        if not (has_q and has_phi):
            raise ConfigError(
                "physics requires either beta or both q and phi")
        phys["beta"] = -(phys["q"] * phys["phi"]) / (2.0 * math.pi)
    for key in ("hbar", "mass_M"):
        if not (resolved[key] > 0.0):
            raise ConfigError(f"{key!r} must be positive, got {resolved[key]}")
    if resolved["output"]["format"] not in ("csv", "json"):
        raise ConfigError(
            f"'output.format' must be 'csv' or 'json', "
            f"got {resolved['output']['format']!r}")
    for dotted, value in (("timing.dt", resolved["timing"]["dt"]),
                          ("timing.T", resolved["timing"]["T"])):
        if not (value > 0.0 and math.isfinite(value)):
            raise ConfigError(f"{dotted!r} must be positive, got {value}")
    if not math.isfinite(phys["beta"]):
        raise ConfigError(f"'physics.beta' must be finite, got {phys['beta']}")
    if resolved["experiment"]["sweep_count"] < 1:
        raise ConfigError(
            f"'experiment.sweep_count' must be >= 1, "
            f"got {resolved['experiment']['sweep_count']}")
    return resolved


def _grid_from(config: dict) -> RadialGrid:
    g = config["grid"]
    return RadialGrid(g["rho_min"], g["rho_max"], g["n_points"], g["spacing"])


def _geometry_from(config: dict) -> InterferenceGeometry:
    e = config["experiment"]
    return InterferenceGeometry(
        source_radius=e["source_radius"], source_angle=e["source_angle"],
        speed=e["speed"], sigma_radial=e["sigma_radial"],
        sigma_angular=e["sigma_angular"],
        detector_halfwidth=e["detector_halfwidth"],
        detector_points=e["detector_points"],
        m_max=config["truncation"]["m_max"],
        use_mask=e["use_mask"], mask_fraction=e["mask_fraction"])


def _unit_comments(config: dict) -> list:
    hbar, mass = config["hbar"], config["mass_M"]
    r = config["grid"]["rho_max"]
    return [
        "units: energy in hbar^2/(M R^2), time in M R^2/hbar, "
        "phase and angles in radians, lengths in grid units (R = rho_max)",
        "supplied-unit values: energy unit = %.17g, time unit = %.17g"
        % (hbar * hbar / (mass * r * r), mass * r * r / hbar),
    ]


def _check(value: float, threshold: float) -> dict:
    return {"value": value, "threshold": threshold,
            "pass": bool(value <= threshold)}


def _run_algebra_check(config: dict):
    beta = config["physics"]["beta"]
    seed = config["seed"]
    grid = _grid_from(config)
    rows = []

    names = BASIS + ("center",)
    worst_jacobi = 0.0
    for a, b, c in itertools.product(names, repeat=3):
        resid = jacobi_residual(LieElement(**{f"coeff_{a}": 1.0}),
                                LieElement(**{f"coeff_{b}": 1.0}),
                                LieElement(**{f"coeff_{c}": 1.0}))
        worst_jacobi = max(worst_jacobi, float(np.abs(resid.coefficients()).max()))
    rows.append({"check": "jacobi_identity", "detail": "all basis triples",
                 "residual": worst_jacobi, "threshold": 0.0,
                 "pass": worst_jacobi <= 0.0})

    poisson = central_extension_check(seed=seed)
    rows.append({"check": "poisson_homomorphism", "detail": "6 generator pairs",
                 "residual": poisson, "threshold": 1e-12,
                 "pass": poisson <= 1e-12})

    rep = build_rep(beta, config["truncation"]["m_max"], grid)
    probe = smooth_test_vector(rep, seed=seed)
    exact_pairs = {("pi_phi", "pi_rho"), ("c", "s")}
    for i, a in enumerate(BASIS):
        for b in BASIS[i + 1:]:
            resid = commutator_residual(rep, (a, b), probe)
            bound = 0.0 if (a, b) in exact_pairs else 1e-8
            # semicolon pair separator keeps the cell comma-free for CSV
            rows.append({"check": "commutator", "detail": f"[{a};{b}]",
                         "residual": resid, "threshold": bound,
                         "pass": resid <= bound})

    invariants = {r["check"] + ":" + r["detail"]:
                  _check(r["residual"], r["threshold"]) for r in rows}
    columns = ["check", "detail", "residual", "threshold", "pass"]
    return columns, rows, invariants


def _run_equivalence(config: dict):
    alpha = config["physics"]["beta"]
    grid = _grid_from(config)
    m_max = config["truncation"]["m_max"]
    worst = equivalence_check(alpha, grid, range(-m_max, m_max + 1), mass_M=1.0)
    rows = [{"alpha": alpha, "m_max": m_max, "n_points": grid.n_points,
             "max_rel_diff": worst, "threshold": 1e-13,
             "pass": worst < 1e-13}]
    columns = ["alpha", "m_max", "n_points", "max_rel_diff", "threshold", "pass"]
    return columns, rows, {"route_agreement": _check(worst, 1e-13)}


def _run_spectrum(config: dict):
    beta = config["physics"]["beta"]
    grid = _grid_from(config)
    m_max = config["truncation"]["m_max"]
    result = disk_spectrum(beta, range(-m_max, m_max + 1), grid.rho_max, grid,
                           k_per_sector=config["truncation"]["k_per_sector"])
    rows = [{"beta": beta, "m": e.m, "n": e.n, "energy": e.energy,
             "oracle_energy": e.oracle_energy, "rel_err": e.rel_err,
             "rho_min_shift": e.rho_min_shift} for e in result.entries]
    worst = max(r["rel_err"] for r in rows)
    columns = ["beta", "m", "n", "energy", "oracle_energy", "rel_err",
               "rho_min_shift"]
    return columns, rows, {"worst_oracle_rel_err": _check(worst, 1e-4)}


def _run_evolve(config: dict):
    beta = config["physics"]["beta"]
    grid = _grid_from(config)
    e = config["experiment"]
    m_max = config["truncation"]["m_max"]
    # kinetic angular momentum speed*rho0, so the launch velocity is
    # flux-independent; canonical center offsets by -beta
    k_phi = e["speed"] * e["source_radius"] - beta
    psi0 = gaussian_packet((e["source_radius"], e["source_angle"]),
                           (e["sigma_radial"], e["sigma_angular"]),
                           (e["radial_momentum"], k_phi), grid, m_max)
    hams = sector_family(beta, grid, m_max)
    mask = absorbing_mask(grid, e["mask_fraction"]) if e["use_mask"] else None
    dt, big_t = config["timing"]["dt"], config["timing"]["T"]
    steps = max(1, int(round(big_t / dt)))
    traj = evolve(psi0, hams, big_t, big_t / steps,
                  snapshots=config["timing"]["snapshots"], mask=mask)
    rows = [{"time": snap.time, "norm": snap.norm, "energy": snap.energy}
            for snap in traj]
    invariants = {"steps": {"value": steps}}
    if not e["use_mask"]:
        norm_drift = max(abs(r["norm"] - rows[0]["norm"]) for r in rows)
        scale = abs(rows[0]["energy"]) or 1.0
        energy_drift = max(abs(r["energy"] - rows[0]["energy"]) for r in rows) / scale
        invariants["norm_drift"] = _check(norm_drift, 1e-10)
        invariants["energy_drift_rel"] = _check(energy_drift, 1e-8)
    return ["time", "norm", "energy"], rows, invariants


def _run_interfere(config: dict):
    grid = _grid_from(config)
    geom = _geometry_from(config)
    e = config["experiment"]
    base = config["physics"]["beta"]
    betas = [base + i * e["sweep_step"] for i in range(e["sweep_count"])]
    records = fringe_sweep(betas, geom, grid, dt=config["timing"]["dt"])
    rows = [{"beta": r.beta, "extracted_shift": r.extracted_shift,
             "contrast": r.contrast} for r in records]
    invariants = {"fringe_wavenumber": {"value": records[0].fringe_wavenumber}}
    if len(betas) >= 3:
        slope = float(np.polyfit(betas, np.unwrap([r.extracted_shift
                                                   for r in records]), 1)[0])
        rel = abs(slope - 2.0 * math.pi) / (2.0 * math.pi)
        invariants["shift_slope"] = {"value": slope, "rel_err": rel,
                                     "threshold": 0.05, "pass": rel < 0.05}
    return ["beta", "extracted_shift", "contrast"], rows, invariants


_RUNNERS = {
    "algebra-check": _run_algebra_check,
    "equivalence": _run_equivalence,
    "spectrum": _run_spectrum,
    "evolve": _run_evolve,
    "interfere": _run_interfere,
}


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "%.17g" % value
    return str(value)


def _write_data(path: Path, columns, rows, comments) -> None:
    if path.suffix == ".csv":
        lines = [f"# {c}" for c in comments]
        lines.append(",".join(columns))
        lines.extend(",".join(_format_cell(row[col]) for col in columns)
                     for row in rows)
        body = "\n".join(lines) + "\n"
    else:
        body = json.dumps({"comments": list(comments), "columns": list(columns),
                           "rows": rows}, indent=2) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(body)


def run(config: dict) -> int:
    """Execute a resolved config; write data + manifest; return exit code."""
    out_dir = Path(config["output"]["directory"])
    out_dir.mkdir(parents=True, exist_ok=True)
    mode = config["mode"]
    started = time.perf_counter()
    try:
        columns, rows, invariants = _RUNNERS[mode](config)
    except NumericFailure as exc:
        diag = {"error": type(exc).__name__, "message": str(exc),
                "diagnostics": getattr(exc, "diagnostics", {})}
        with open(out_dir / "diagnostics.json", "w", encoding="utf-8",
                  newline="\n") as handle:
            handle.write(json.dumps(diag, indent=2, default=repr) + "\n")
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    wall = time.perf_counter() - started

    data_path = out_dir / f"{mode}.{config['output']['format']}"
    _write_data(data_path, columns, rows, _unit_comments(config))
    manifest = {
        "tool": "fluxlab",
        "version": __version__,
        "mode": mode,
        "beta": config["physics"]["beta"],
        "config": config,
        "invariants": invariants,
        "artifacts": {"data": data_path.name},
        "run": {
            "timestamp_utc": datetime.now(timezone.utc).isoformat(),
            "wall_time_s": wall,
        },
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8",
              newline="\n") as handle:
        handle.write(json.dumps(manifest, indent=2) + "\n")
    return 0


# flag name -> (section, key); sections "" mean top level
_FLAG_KEYS = [
    ("beta", ("physics", "beta")), ("q", ("physics", "q")),
    ("phi", ("physics", "phi")), ("hbar", ("", "hbar")),
    ("mass-M", ("", "mass_M")), ("rho-min", ("grid", "rho_min")),
    ("rho-max", ("grid", "rho_max")), ("n-points", ("grid", "n_points")),
    ("spacing", ("grid", "spacing")), ("m-max", ("truncation", "m_max")),
    ("k-per-sector", ("truncation", "k_per_sector")),
    ("dt", ("timing", "dt")), ("T", ("timing", "T")),
    ("snapshots", ("timing", "snapshots")),
    ("source-radius", ("experiment", "source_radius")),
    ("source-angle", ("experiment", "source_angle")),
    ("speed", ("experiment", "speed")),
    ("sigma-radial", ("experiment", "sigma_radial")),
    ("sigma-angular", ("experiment", "sigma_angular")),
    ("radial-momentum", ("experiment", "radial_momentum")),
    ("detector-halfwidth", ("experiment", "detector_halfwidth")),
    ("detector-points", ("experiment", "detector_points")),
    ("use-mask", ("experiment", "use_mask")),
    ("mask-fraction", ("experiment", "mask_fraction")),
    ("sweep-step", ("experiment", "sweep_step")),
    ("sweep-count", ("experiment", "sweep_count")),
    ("out", ("output", "directory")), ("format", ("output", "format")),
    ("seed", ("", "seed")),
]


def _schema_slot(section: str, key: str):
    return _SCHEMA[key] if section == "" else _SCHEMA[section][key]


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluxlab",
        description="Flux-threaded punctured-plane batch runs")
    subs = parser.add_subparsers(dest="mode", required=True)
    casters = {"float": float, "int": int, "str": str, "bool": _parse_bool}
    for mode in MODES:
        sub = subs.add_parser(mode, help=f"run the {mode} mode")
        sub.add_argument("--config", type=Path, default=None,
                         help="JSON config file")
        for flag, (section, key) in _FLAG_KEYS:
            tag = _schema_slot(section, key)[0]
            sub.add_argument(f"--{flag}", dest=f"kv::{section}::{key}",
                             type=casters[tag], default=None,
                             metavar=tag.upper())
    return parser


def _overrides_from(namespace: argparse.Namespace) -> dict:
    out = {}
    for name, value in vars(namespace).items():
        if not name.startswith("kv::") or value is None:
            continue
        _, section, key = name.split("::")
        if section == "":
            out[key] = value
        else:
            out.setdefault(section, {})[key] = value
    return out


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        file_data = {}
        if args.config is not None:
            try:
                file_data = json.loads(Path(args.config).read_text(encoding="utf-8"))
            except FileNotFoundError:
                raise ConfigError(f"config file not found: {args.config}")
            except json.JSONDecodeError as exc:
                raise ConfigError(
                    f"config parse error at line {exc.lineno} column "
                    f"{exc.colno}: {exc.msg}")
            if not isinstance(file_data, dict):
                raise ConfigError("config file must hold a JSON object")
        config = resolve_config(args.mode, file_data, _overrides_from(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        return run(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
