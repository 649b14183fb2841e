"""Command-line batch runner: ``qnm-lab list`` and ``qnm-lab run CONFIG``.

A run reads an INI file, executes one experiment and writes CSV datasets
plus a JSON manifest into the output directory. Numbers are written with
``repr`` (shortest round-trip binary64), so identical configs produce
byte-identical files.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .constants import C0
from .errors import ConfigError, QnmLabError
from .materials import VACUUM, material_from_mapping

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

REQUIRED = object()


# --- value parsers ----------------------------------------------------------


def _complex(text: str) -> complex:
    return complex(text.replace(" ", "").replace("i", "j"))


def _list(conv):
    def parse(text: str):
        return [conv(t) for t in text.replace("\n", ",").split(",") if t.strip()]
    return parse


def _str(text: str) -> str:
    return text.strip()


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


# --- schemas ----------------------------------------------------------------

SPHERE_GEOMETRY = {
    "radius_nm": (float, REQUIRED),
    "mode_l": (int, 1),
    "polarization": (_str, "TM"),
    "guess_wavelength_nm": (_complex, REQUIRED),
}
SLAB_GEOMETRY = {
    "index": (float, REQUIRED),
    "thickness_nm": (float, REQUIRED),
}
GRID = {
    "half_width_nm": (float, REQUIRED),
    "cells": (int, REQUIRED),
}
PML = {
    "thickness_nm": (float, REQUIRED),
    "stretch": (_complex, 3 + 3j),
    "stretch_alt": (_complex, 5 + 2j),
    "grading": (float, 0.0),
    "right_factor": (float, 1.1),
}

SCHEMAS = {
    "sphere-norms": {
        "geometry": SPHERE_GEOMETRY,
        "sweep": {
            "R_nm": (_list(float), REQUIRED),
            "methods": (_list(_str), ["LK", "M_exact", "M_fd", "PML"]),
            "pml_alpha": (_complex, 1 + 0.5j),
            "pml_thickness_nm": (float, 4000.0),
            "fd_step_nm": (float, None),
        },
    },
    "invariance": {
        "geometry": SPHERE_GEOMETRY,
        "sweep": {
            "R_nm": (_list(float), REQUIRED),
            "pml_alphas": (_list(_complex), [1 + 0.5j, 1 + 1j]),
            "pml_thickness_nm": (float, 4000.0),
        },
    },
    "slab-complete": {
        "geometry": SLAB_GEOMETRY,
        "sweep": {
            "M_list": (_list(int), REQUIRED),
            "x_nm": (_list(float), REQUIRED),
            "source_nm": (float, 0.0),
            "omega_rad_s": (float, REQUIRED),
        },
    },
    "fdfd-spectrum": {
        "geometry": SLAB_GEOMETRY,
        "grid": GRID,
        # a constant stretch moves QNM eigenvalues with f by more than the
        # 1e-6 classification tolerance, so this experiment grades by default
        "pml": {**PML, "grading": (float, 2.0)},
        "source": {"x_nm": (float, 0.0), "omega_rad_s": (float, REQUIRED)},
    },
    "fdfd-reconstruct": {
        "geometry": SLAB_GEOMETRY,
        "grid": GRID,
        "pml": {k: v for k, v in PML.items() if k != "stretch_alt"},
        "source": {"x_nm": (float, 0.0)},
        "sweep": {"omega_rad_s": (_list(float), REQUIRED)},
    },
    "revelation": {
        "geometry": SLAB_GEOMETRY,
        "grid": GRID,
        "pml": {
            "thickness_nm": (float, REQUIRED),
            "stretch_abs": (float, REQUIRED),
            "grading": (float, 2.0),
        },
        "sweep": {
            "tan_theta": (_list(float), [0.05, 0.2, 1.0]),
            "m_max": (int, 8),
        },
    },
}

DESCRIPTIONS = {
    "sphere-norms": "LK, M and PML norms of a sphere mode versus integration radius",
    "slab-complete": "pole expansion of the slab response versus the number of poles",
    "fdfd-spectrum": "discretised slab spectrum with QNM/numerical classification",
    "fdfd-reconstruct": "modal reconstruction of driven fields, full basis versus QNMs",
    "invariance": "PML norm of a sphere mode for several radii and PML slopes",
    "revelation": "revealed slab QNMs as a function of the PML stretch angle",
}

#: Stable ordering of the experiments.
EXPERIMENTS = tuple(sorted(DESCRIPTIONS))


def list_experiments() -> list[tuple[str, str]]:
    """``(name, description)`` pairs in stable order."""
    return [(name, DESCRIPTIONS[name]) for name in EXPERIMENTS]


@dataclass
class ExperimentConfig:
    """Parsed, validated configuration of one run."""

    experiment: str
    sections: dict
    materials: dict
    echo: dict


def parse_config(text: str) -> ExperimentConfig:
    """Validate INI ``text`` against the experiment schema.

    Raises
    ------
    ConfigError
        Syntax errors, unknown sections or keys, unparsable values and
        missing required keys.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case (R_nm, M_list)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    if not parser.has_section("experiment"):
        raise ConfigError("missing [experiment] section")
    exp = dict(parser["experiment"])
    if set(exp) != {"name"}:
        raise ConfigError("[experiment] takes exactly one key: name")
    name = exp["name"].strip()
    if name not in SCHEMAS:
        raise ConfigError(f"unknown experiment {name!r}")
    schema = SCHEMAS[name]
    sections, materials = {}, {}
    echo = {s: dict(parser[s]) for s in parser.sections()}
    for sec in parser.sections():
        if sec == "experiment":
            continue
        if sec.startswith("material."):
            if name not in ("sphere-norms", "invariance"):
                raise ConfigError(f"experiment {name} takes no material sections")
            role = sec.split(".", 1)[1]
            if role not in ("interior", "exterior"):
                raise ConfigError(f"unknown material role {role!r}")
            materials[role] = material_from_mapping(parser[sec])
            continue
        if sec not in schema:
            raise ConfigError(f"unknown section [{sec}] for {name}")
    for sec, keys in schema.items():
        raw = dict(parser[sec]) if parser.has_section(sec) else {}
        unknown = set(raw) - set(keys)
        if unknown:
            raise ConfigError(f"unknown keys in [{sec}]: {sorted(unknown)}")
        parsed = {}
        for key, (conv, default) in keys.items():
            if key in raw:
                try:
                    parsed[key] = conv(raw[key])
                except ValueError as exc:
                    raise ConfigError(f"[{sec}] {key}: {exc}") from exc
            elif default is REQUIRED:
                raise ConfigError(f"missing key {key!r} in [{sec}]")
            else:
                parsed[key] = default
        sections[sec] = parsed
    if name in ("sphere-norms", "invariance") and "interior" not in materials:
        raise ConfigError("missing [material.interior] section")
    return ExperimentConfig(name, sections, materials, echo)


# --- experiments -------------------------------------------------------------


@dataclass
class Dataset:
    name: str
    header: list
    rows: list
    params: dict


def _sphere_mode(cfg: ExperimentConfig):
    from .mie import TE, TM, SphereGeometry, find_mie_qnm

    g = cfg.sections["geometry"]
    geom = SphereGeometry(g["radius_nm"] * 1e-9, cfg.materials["interior"],
                          cfg.materials.get("exterior", VACUUM))
    pol = {"TM": TM, "TE": TE}.get(g["polarization"].upper())
    if pol is None:
        raise ConfigError("polarization must be TM or TE")
    guess = 2 * math.pi * C0 / (g["guess_wavelength_nm"] * 1e-9)
    mode = find_mie_qnm(geom, g["mode_l"], pol, guess)
    return geom, mode


def _run_sphere_norms(cfg, threads):
    from .norms import norm_sweep

    geom, mode = _sphere_mode(cfg)
    sw = cfg.sections["sweep"]
    fd_h = sw["fd_step_nm"] * 1e-9 if sw["fd_step_nm"] is not None else None
    methods = list(sw["methods"])
    run_methods = methods if "PML" in methods else methods + ["PML"]
    R_nm = sorted(sw["R_nm"])
    R_list = [r * 1e-9 for r in R_nm]
    to_nm = dict(zip(R_list, R_nm))
    results = norm_sweep(mode, geom, R_list, run_methods, pml_alpha=sw["pml_alpha"],
                         pml_T=sw["pml_thickness_nm"] * 1e-9, fd_h=fd_h, threads=threads)
    pml = {r.R: r.value for r in results if r.method == "PML"}
    rows, warn = [], []
    for r in results:
        if r.method not in methods:
            continue
        ref = pml.get(r.R)
        if "error" in r.meta:
            warn.append(f"R={r.R!r} {r.method}: {r.meta['error']}")
        err = ((r.value - ref).real / ref.real) if ref is not None else float("nan")
        rows.append([to_nm.get(r.R, r.R * 1e9), r.method, r.value.real, r.value.imag, err])
    params = {"omega_rad_s": [mode.omega_t.real, mode.omega_t.imag], "Q": mode.Q,
              "pml_alpha": [sw["pml_alpha"].real, sw["pml_alpha"].imag],
              "pml_thickness_nm": sw["pml_thickness_nm"],
              "fd_step_nm": (fd_h if fd_h is not None else 1e-4 * geom.a) * 1e9,
              "nodes_per_wavelength": 32}
    return [Dataset("sphere_norms", ["R_nm", "method", "re_norm", "im_norm",
                                     "rel_err_vs_pml"], rows, params)], warn


def _run_invariance(cfg, threads):
    from .norms import PmlMap, pml_norm

    geom, mode = _sphere_mode(cfg)
    sw = cfg.sections["sweep"]
    T = sw["pml_thickness_nm"] * 1e-9
    R_nm = sorted(sw["R_nm"])
    jobs = [(R * 1e-9, a) for a in sw["pml_alphas"] for R in R_nm]

    def one(job):
        R, a = job
        return pml_norm(mode, geom, PmlMap(R, a, T)).value

    values = _map(one, jobs, threads)
    ref = values[0]
    rows = [[r_nm, a.real, a.imag, v.real, v.imag, abs(v - ref) / abs(ref)]
            for r_nm, (_, a), v in zip(R_nm * len(sw["pml_alphas"]), jobs, values)]
    params = {"omega_rad_s": [mode.omega_t.real, mode.omega_t.imag],
              "pml_thickness_nm": sw["pml_thickness_nm"], "nodes_per_wavelength": 32}
    return [Dataset("invariance", ["R_nm", "re_alpha", "im_alpha", "re_norm", "im_norm",
                                   "rel_dev"], rows, params)], []


def _run_slab_complete(cfg, threads):
    from .errors import OutsideCompletenessRegion
    from .slab1d import SlabGeometry, slab_green_expansion, slab_green_tmm

    g = cfg.sections["geometry"]
    sw = cfg.sections["sweep"]
    geom = SlabGeometry(g["index"], g["thickness_nm"] * 1e-9)
    xs = sw["source_nm"] * 1e-9
    w = sw["omega_rad_s"]
    rows, warn = [], []
    for x_nm in sw["x_nm"]:
        x = x_nm * 1e-9
        ref = slab_green_tmm(geom, x, xs, w)
        for M in sorted(sw["M_list"]):
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", OutsideCompletenessRegion)
                val = slab_green_expansion(geom, x, xs, w, M)
            if caught and M == min(sw["M_list"]):
                warn.append(f"x_nm={x_nm!r}: outside the completeness region")
            rows.append([M, x_nm, abs(val - ref), abs(val - ref) / abs(ref)])
    rows.sort(key=lambda r: (r[0], r[1]))
    params = {"source_nm": sw["source_nm"], "omega_rad_s": w,
              "poles": "m = -M..M (pairs with Hermitian twins plus m = 0)"}
    return [Dataset("slab_complete", ["M", "x_nm", "abs_err", "rel_err"], rows, params)], warn


def _fdfd_setup(cfg, stretch):
    from .fdfd1d import Grid1D, PmlProfile1D, assemble
    from .slab1d import SlabGeometry

    g = cfg.sections["geometry"]
    gr = cfg.sections["grid"]
    p = cfg.sections["pml"]
    geom = SlabGeometry(g["index"], g["thickness_nm"] * 1e-9)
    h = gr["half_width_nm"] * 1e-9
    grid = Grid1D(-h, h, gr["cells"])
    factor = p.get("right_factor", 1.0)
    pml = PmlProfile1D(p["thickness_nm"] * 1e-9, stretch, p["grading"], stretch * factor)
    return assemble(geom, grid, pml)


def _pml_params(p):
    return {k: ([v.real, v.imag] if isinstance(v, complex) else v) for k, v in p.items()}


def _run_fdfd_spectrum(cfg, threads):
    from .fdfd1d import (LineSource, biorthonormalize, classify_modes, eigensolve,
                         excitation_coefficients)

    p = cfg.sections["pml"]
    s1 = _fdfd_setup(cfg, p["stretch"])
    s2 = _fdfd_setup(cfg, p["stretch_alt"])
    m1, m2 = eigensolve(s1), eigensolve(s2)
    modes = biorthonormalize(classify_modes(m1, m2, system1=s1, system2=s2), s1)
    src = cfg.sections["source"]
    alphas = excitation_coefficients(modes, s1, LineSource(src["x_nm"] * 1e-9),
                                     src["omega_rad_s"])
    rows = sorted(
        ([m.omega_t.real, m.omega_t.imag, m.classification, abs(a)]
         for m, a in zip(modes, alphas)),
        key=lambda r: (r[0], r[1]),
    )
    params = {"pml": _pml_params(p), "dim": s1.dim, "classification_tol": 1e-6,
              "source_nm": src["x_nm"], "omega_rad_s": src["omega_rad_s"]}
    return [Dataset("fdfd_spectrum", ["re_omega", "im_omega", "class", "alpha_abs"],
                    rows, params)], []


def _run_fdfd_reconstruct(cfg, threads):
    from .fdfd1d import (LineSource, biorthonormalize, eigensolve,
                         excitation_and_reconstruct, match_analytic_qnms)

    p = cfg.sections["pml"]
    s1 = _fdfd_setup(cfg, p["stretch"])
    modes = biorthonormalize(eigensolve(s1), s1)
    qnm = match_analytic_qnms(modes, s1.geom)
    src = LineSource(cfg.sections["source"]["x_nm"] * 1e-9)
    rows = []
    for w in sorted(cfg.sections["sweep"]["omega_rad_s"]):
        _, _, full = excitation_and_reconstruct(modes, s1, src, w)
        _, _, part = excitation_and_reconstruct(modes, s1, src, w, qnm)
        rows.append([w, "full", len(modes), full])
        rows.append([w, "qnm", len(qnm), part])
    params = {"pml": _pml_params(p), "dim": s1.dim,
              "source_nm": cfg.sections["source"]["x_nm"]}
    return [Dataset("fdfd_reconstruct", ["omega_rad_s", "basis", "modes", "max_rel_err"],
                    rows, params)], []


def _run_revelation(cfg, threads):
    from .fdfd1d import Grid1D, revelation_study
    from .slab1d import SlabGeometry

    g = cfg.sections["geometry"]
    gr = cfg.sections["grid"]
    p = cfg.sections["pml"]
    sw = cfg.sections["sweep"]
    geom = SlabGeometry(g["index"], g["thickness_nm"] * 1e-9)
    h = gr["half_width_nm"] * 1e-9
    rows = revelation_study(geom, Grid1D(-h, h, gr["cells"]), p["thickness_nm"] * 1e-9,
                            [math.atan(t) for t in sorted(sw["tan_theta"])],
                            p["stretch_abs"], m_max=sw["m_max"], grading=p["grading"])
    out = [[r.tan_theta, r.m, r.Q, r.predicted, r.revealed, r.shift, r.error] for r in rows]
    params = {"pml": p, "stretch_scales": [1.0, 1.5], "stable_tol": 1e-6, "match_tol": 1e-2}
    return [Dataset("revelation", ["tan_theta", "m", "Q", "predicted", "revealed", "shift",
                                   "error"], out, params)], []


RUNNERS: dict[str, Callable] = {
    "sphere-norms": _run_sphere_norms,
    "invariance": _run_invariance,
    "slab-complete": _run_slab_complete,
    "fdfd-spectrum": _run_fdfd_spectrum,
    "fdfd-reconstruct": _run_fdfd_reconstruct,
    "revelation": _run_revelation,
}


def _map(func, items, threads):
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(func, items))
    return [func(i) for i in items]


# --- output ---------------------------------------------------------------------


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")


def _versions() -> dict:
    import scipy

    return {"qnmlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _write_manifest(out: Path, manifest: dict) -> None:
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    (out / "manifest.json").write_text(text, encoding="utf-8", newline="")


def run(config_path: str, out_dir: str = ".", threads: int = 1) -> int:
    """Execute the experiment described by ``config_path``; return the exit code."""
    out = Path(out_dir)
    try:
        text = Path(config_path).read_text(encoding="utf-8")
        cfg = parse_config(text)
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"experiment": cfg.experiment, "config_echo": cfg.echo,
                "versions": _versions(), "outputs": [], "warnings": []}
    try:
        datasets, warn = RUNNERS[cfg.experiment](cfg, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QnmLabError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        manifest["error"] = {"name": type(exc).__name__, "message": str(exc)}
        _write_manifest(out, manifest)
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for ds in datasets:
        fname = f"{ds.name}.csv"
        write_csv(out / fname, ds.header, ds.rows)
        manifest["outputs"].append({"file": fname, "columns": ds.header,
                                    "rows": len(ds.rows), "parameters": ds.params})
    manifest["warnings"] = warn
    _write_manifest(out, manifest)
    return EXIT_OK


def _threads(value) -> int:
    if value is not None:
        return max(1, int(value))
    env = os.environ.get("QNMLAB_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="qnm-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list the available experiments")
    prun = sub.add_parser("run", help="run an experiment from a config file")
    prun.add_argument("config")
    prun.add_argument("--out", default=".", help="output directory (default: .)")
    prun.add_argument("--threads", type=int, default=None,
                      help="worker threads (default: $QNMLAB_THREADS or 1)")
    args = parser.parse_args(argv)
    if args.command == "list":
        for name, desc in list_experiments():
            print(f"{name}\t{desc}")
        return EXIT_OK
    return run(args.config, args.out, _threads(args.threads))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
