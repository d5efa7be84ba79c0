"""Command-line front end.

Subcommands ``generate``, ``reconstruct``, ``diagnose`` and ``sweep`` read an
optional JSON config (``--config``); flags override config keys.  Fields go
to binary containers, reports to JSON and sweeps to CSV.  Every output is
written atomically and depends only on the effective config and seed.

Exit codes: 0 success, 1 internal error, 2 configuration or precondition
error.  Errors are reported as a JSON object on stderr and, when the output
directory is usable, in ``error.json``.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .container import Container, read_container, write_container
from .diffops import FDConfig
from .errors import (
    AdmitrecError,
    ContainerError,
    EllipticityError,
    GridError,
    MaskError,
    NotDiagonalizableError,
    PreconditionError,
    SolverError,
)
from .fields import Grid3, MatrixField, ScalarField, VectorField, create_grid
from .recon_aniso import ReconConfig, compute_lambda, compute_Y, diagnostics, error_norms, reconstruct
from .recon_iso import IsoReconConfig, cgo_parameters, reconstruct_isotropic, transport_residual
from .synthetic import (
    NoiseSpec,
    add_noise_all,
    evaluate_frame,
    fdfd_solve,
    frame_E,
    frame_H_list,
    plane_wave_frame,
    scalar_gamma_field,
)

CSV_HEADER = ["delta", "h", "s", "w_s_inf_error", "valid_voxel_fraction"]

GAMMA0_PRESETS = {
    "identity": np.eye(3, dtype=np.complex128),
    "anisotropic": np.array([[2, 0.3, 0], [0.3, 1.5, 0.2], [0, 0.2, 3]])
    + 1j * np.array([[1, 0.1, 0], [0.1, 2, 0], [0, 0, 1.2]]),
    "isotropic": (1.5 + 0.8j) * np.eye(3),
}

DEFAULTS = {
    "grid": 16,
    "spacing": None,
    "omega": 1.0,
    "mu0": 1.0,
    "seed": 0,
    "fd_order": 2,
    "out": "admitrec-out",
    "generate": {
        "mode": "frame",
        "gamma0": "identity",
        "kappa": 100.0,
        "gamma_field": "smooth_isotropic",
        "boundary": "frame",
        "cgo": {"a": 0.5, "c": 2.0},
        "delta": 0.0,
        "smoothing_radius": 0,
        "include_E": False,
    },
    "reconstruct": {
        "input": None,
        "mode": "aniso",
        "solver_mode": "least_squares",
        "num_fields": None,
        "detY_rel_threshold": 1e-6,
        "w_cond_threshold": 1e8,
        "s_values": [0],
        "anchor_index": None,
        "anchor_value": None,
        "theta_cond_threshold": 1e6,
    },
    "diagnose": {
        "input": None,
        "extra_fields": None,
        "detY_rel_threshold": 1e-6,
        "w_cond_threshold": 1e8,
    },
    "sweep": {
        "gamma0": "anisotropic",
        "deltas": [0.0, 1e-4, 1e-3, 1e-2],
        "grids": [16],
        "s_values": [0],
        "smoothing_radius": 3,
        "repeats": 1,
        "error_reference": "truth",
    },
}


class ConfigError(AdmitrecError, ValueError):
    """Invalid configuration or command-line input."""


# ----------------------------------------------------------------- helpers


def _deep_update(base: dict, upd: dict) -> dict:
    for k, v in upd.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v
    return base


def _threads() -> int:
    raw = os.environ.get("ADMITREC_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"ADMITREC_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError("ADMITREC_THREADS must be >= 1")
    return n


def _pmap(func, items):
    items = list(items)
    n = min(_threads(), max(len(items), 1))
    if n == 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items))


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (complex, np.complexfloating)):
        return [float(o.real), float(o.imag)]
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def write_json(path: Path, obj) -> None:
    _atomic_write_text(path, _dumps(obj))


def parse_gamma0(spec) -> np.ndarray:
    """A preset name, a JSON string, ``{"real": .., "imag": ..}`` or a complex scalar pair."""
    if isinstance(spec, str):
        if spec in GAMMA0_PRESETS:
            return GAMMA0_PRESETS[spec].copy()
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"unknown gamma0 {spec!r}; presets: {sorted(GAMMA0_PRESETS)}") from exc
    if isinstance(spec, dict):
        re_ = np.asarray(spec.get("real", np.zeros((3, 3))), dtype=float)
        im_ = np.asarray(spec.get("imag", np.zeros((3, 3))), dtype=float)
        g = re_ + 1j * im_
    else:
        arr = np.asarray(spec, dtype=float)
        if arr.shape == (2,):
            g = (arr[0] + 1j * arr[1]) * np.eye(3)
        else:
            raise ConfigError("gamma0 must be a preset, {real, imag} matrices or a [re, im] scalar")
    if g.shape != (3, 3):
        raise ConfigError("gamma0 must be 3x3")
    return g


def _complex_value(v) -> complex:
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, str):
        return complex(v.replace(" ", ""))
    raise ConfigError(f"cannot read a complex value from {v!r}")


def _grid_from_config(cfg: dict) -> Grid3:
    n = int(cfg["grid"])
    h = cfg.get("spacing")
    h = 1.0 / (n - 1) if h is None else float(h)
    return create_grid((n, n, n), (h, h, h))


def smooth_isotropic_gamma(pts: np.ndarray) -> np.ndarray:
    """Built-in smooth scalar admittivity in the open first quadrant."""
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    return 1.5 + 0.3 * np.sin(np.pi * x) * np.cos(np.pi * y / 2) + 1j * (0.8 + 0.2 * z * z)


def _load_input(path) -> Container:
    if path is None:
        raise ConfigError("an input container is required (--input)")
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"input container {p} does not exist")
    return read_container(p)


def _h_fields(cont) -> list[VectorField]:
    out = []
    i = 1
    while f"H{i}" in cont.fields:
        out.append(cont.fields[f"H{i}"])
        i += 1
    return out


# ---------------------------------------------------------------- generate


def cmd_generate(cfg: dict) -> dict:
    g = cfg["generate"]
    grid = _grid_from_config(cfg)
    omega, mu0 = float(cfg["omega"]), float(cfg["mu0"])
    out = Path(cfg["out"])
    fields: dict = {}
    meta = {"generator": g["mode"], "omega": omega, "mu0": mu0, "seed": int(cfg["seed"])}
    report = {"command": "generate", "version": __version__}
    if g["mode"] == "frame":
        gamma0 = parse_gamma0(g["gamma0"])
        frame = plane_wave_frame(gamma0, omega, mu0, kappa=float(g["kappa"]))
        which = ("E", "H") if g["include_E"] else ("H",)
        data = evaluate_frame(frame, grid, which=which)
        H = [data[f"H{i}"] for i in range(1, 7)]
        gamma = MatrixField(grid, np.broadcast_to(gamma0, grid.dims + (3, 3)), "symmetric")
        E = [data[f"E{i}"] for i in range(1, 7)] if g["include_E"] else []
        meta["boundary"] = "frame"
        report["eigvals"] = frame.eigvals
        data_mask = None
    elif g["mode"] == "fdfd":
        gamma = _gamma_field_for_fdfd(g, grid)
        H, E, data_mask, residuals, bmeta = _fdfd_fields(gamma, grid, omega, mu0, g)
        meta.update(bmeta)
        report["solver_residuals"] = residuals
        report["max_solver_residual"] = max(residuals)
    else:
        raise ConfigError(f"unknown generate mode {g['mode']!r}")
    spec = NoiseSpec(float(g["delta"]), int(g["smoothing_radius"]), int(cfg["seed"]))
    H = add_noise_all(H, spec)
    meta["noise"] = {"delta": spec.delta, "smoothing_radius": spec.smoothing_radius, "seed": spec.seed}
    for i, h in enumerate(H, 1):
        fields[f"H{i}"] = h
    for i, e in enumerate(E, 1):
        fields[f"E{i}"] = e
    fields["gamma"] = gamma
    if data_mask is not None:
        fields["data_mask"] = data_mask
    path = out / "data.adm"
    write_container(path, fields, meta)
    report.update(container=str(path), fields=sorted(fields), grid=grid.to_dict(), metadata=meta)
    write_json(out / "generate_report.json", report)
    return report


def _gamma_field_for_fdfd(g: dict, grid: Grid3) -> MatrixField:
    spec = g["gamma_field"]
    if spec == "smooth_isotropic":
        return scalar_gamma_field(grid, smooth_isotropic_gamma)
    if spec == "constant":
        gamma0 = parse_gamma0(g["gamma0"])
        return MatrixField(grid, np.broadcast_to(gamma0, grid.dims + (3, 3)), "symmetric")
    cont = _load_input(spec)
    if "gamma" not in cont.fields:
        raise ConfigError(f"container {spec} has no 'gamma' field")
    gamma = cont.fields["gamma"]
    if gamma.grid != grid:
        raise ConfigError("gamma field grid does not match the configured grid")
    if isinstance(gamma, ScalarField):
        gamma = MatrixField(grid, gamma.values[..., None, None] * np.eye(3), "symmetric")
    return gamma


def _fdfd_fields(gamma: MatrixField, grid: Grid3, omega: float, mu0: float, g: dict):
    mean = gamma.values.reshape(-1, 3, 3).mean(axis=0)
    mean = 0.5 * (mean + mean.T)
    if g["boundary"] == "frame":
        frame = plane_wave_frame(mean, omega, mu0, kappa=float(g["kappa"]))
        sources = [lambda pts, i=i: frame_E(frame, pts, i) for i in range(1, 7)]
        bmeta = {"boundary": "frame", "reference_gamma": {"real": mean.real.tolist(), "imag": mean.imag.tolist()}}
    elif g["boundary"] == "cgo":
        k2 = -1j * omega * mu0 * np.trace(mean) / 3.0
        params = [cgo_parameters(float(g["cgo"]["a"]), float(g["cgo"]["c"]), 0.0, j, k2=k2) for j in (1, 2, 3)]
        sources = [lambda pts, p=p, w=w: p.E(pts, w) for p in params for w in (1, 2)]
        bmeta = {"boundary": "cgo", "cgo": [p.to_dict() for p in params]}
    else:
        cont = _load_input(g["boundary"])
        names = sorted(n for n in cont.fields if n.startswith("boundary_tangential_E"))
        if not names:
            raise ConfigError(f"container {g['boundary']} has no boundary_tangential_E field")
        if cont.grid != grid:
            raise ConfigError("boundary data grid does not match the configured grid")
        sources = [cont.fields[n] for n in names]
        bmeta = {"boundary": "container", "boundary_fields": names}
    results = _pmap(lambda src: fdfd_solve(gamma, omega, mu0, src), sources)
    H = [r.H for r in results]
    E = [r.E for r in results] if g["include_E"] else []
    return H, E, results[0].data_mask, [r.residual for r in results], bmeta


# ------------------------------------------------------------- reconstruct


def _recon_config(cfg: dict, section: dict) -> ReconConfig:
    return ReconConfig(
        fd=FDConfig(int(cfg["fd_order"])),
        detY_rel_threshold=float(section["detY_rel_threshold"]),
        w_cond_threshold=float(section["w_cond_threshold"]),
        solver_mode=section.get("solver_mode", "least_squares"),
        omega=float(cfg["omega"]),
        mu0=float(cfg["mu0"]),
    )


def cmd_reconstruct(cfg: dict) -> dict:
    r = cfg["reconstruct"]
    cont = _load_input(r["input"])
    out = Path(cfg["out"])
    H = _h_fields(cont)
    if r["num_fields"] is not None:
        H = H[: int(r["num_fields"])]
    omega = float(cont.metadata.get("omega", cfg["omega"]))
    mu0 = float(cont.metadata.get("mu0", cfg["mu0"]))
    cfg = {**cfg, "omega": omega, "mu0": mu0}
    data_mask = cont.fields.get("data_mask")
    truth = cont.fields.get("gamma")
    report = {"command": "reconstruct", "version": __version__, "mode": r["mode"], "input_fields": len(H)}
    if r["mode"] == "aniso":
        rc = _recon_config(cfg, r)
        s_values = [int(s) for s in r["s_values"]]
        res = reconstruct(H, rc, gamma_ref=truth, s_values=s_values, data_mask=data_mask)
        report["config"] = rc.to_dict()
        report["report"] = res.report.to_dict()
        if truth is not None:
            report["errors"] = {f"s={s}": e for s, e in res.errors.items()}
            report["h"] = cont.grid.spacing[0]
        write_container(out / "recon.adm", {"gamma_hat": res.gamma, "valid_mask": res.report.valid_mask})
    elif r["mode"] == "iso":
        report.update(_reconstruct_iso(cfg, r, cont, H, data_mask, truth, out))
    else:
        raise ConfigError(f"unknown reconstruct mode {r['mode']!r}")
    write_json(out / "recon_report.json", report)
    return report


def _reconstruct_iso(cfg, r, cont, H, data_mask, truth, out) -> dict:
    if cont.metadata.get("boundary") != "cgo":
        raise PreconditionError("isotropic reconstruction needs CGO-pair data (generate --boundary cgo)")
    if len(H) < 6:
        raise PreconditionError(f"isotropic reconstruction needs 6 magnetic fields, got {len(H)}")
    params = [
        cgo_parameters(p["a"], p["c"], 0.0, p["orientation"], k2=complex(*p["k2"])) for p in cont.metadata["cgo"]
    ]
    pairs = [(H[0], H[1]), (H[2], H[3]), (H[4], H[5])]
    anchor_index = None if r["anchor_index"] is None else tuple(int(i) for i in r["anchor_index"])
    source = "config"
    if r["anchor_value"] is None:
        if truth is None:
            raise ConfigError("anchor_value is required when the input has no ground-truth gamma")
        source = "ground_truth"
        value = None
    else:
        value = _complex_value(r["anchor_value"])
    fd = FDConfig(int(cfg["fd_order"]))

    def run(idx, val):
        ic = IsoReconConfig(fd=fd, anchor_index=idx, anchor_value=val, theta_cond_threshold=float(r["theta_cond_threshold"]))
        return reconstruct_isotropic(pairs, params, ic, data_mask=data_mask), ic

    if value is None:
        # resolve the default anchor first, then read the truth there
        probe, _ = run(anchor_index, 1 + 1j)
        anchor_index = probe.integration.anchor_index
        value = complex(truth.values[anchor_index + (0, 0)] if isinstance(truth, MatrixField) else truth.values[anchor_index])
    res, ic = run(anchor_index, value)
    resid = max(transport_residual(t, v, res.gamma, res.mask, ic) for t, v in zip(res.thetas, res.varthetas))
    rep = {"config": ic.to_dict(), "anchor_value_source": source, "report": res.report(), "transport_residual": resid}
    if truth is not None:
        tv = truth.values[..., 0, 0] if isinstance(truth, MatrixField) else truth.values
        f = res.mask.flags
        rep["max_abs_error"] = float(np.abs(res.gamma.values[f] - tv[f]).max())
        rep["max_rel_error"] = float((np.abs(res.gamma.values[f] - tv[f]) / np.abs(tv[f])).max())
    write_container(out / "recon.adm", {"gamma_hat": res.gamma, "beta": res.beta, "valid_mask": res.mask})
    return rep


# ---------------------------------------------------------------- diagnose


def cmd_diagnose(cfg: dict) -> dict:
    d = cfg["diagnose"]
    cont = _load_input(d["input"])
    H = _h_fields(cont)
    if d["extra_fields"] is not None:
        H = H[: 3 + int(d["extra_fields"])]
    if len(H) < 4:
        raise PreconditionError(f"diagnostics need at least 4 magnetic fields, got {len(H)}")
    omega = float(cont.metadata.get("omega", cfg["omega"]))
    mu0 = float(cont.metadata.get("mu0", cfg["mu0"]))
    rc = _recon_config({**cfg, "omega": omega, "mu0": mu0}, d)
    Y, detY, mY = compute_Y(*H[:3], cfg=rc, mask=cont.fields.get("data_mask"))
    _, Zs, mask = compute_lambda(H, Y, mY, rc)
    rep = diagnostics(Y, Zs, mask, rc, detY)
    interior = mask.count
    ok = int(((rep.rank_field == 6) & mask.flags).sum())
    report = {
        "command": "diagnose",
        "version": __version__,
        "config": rc.to_dict(),
        "extra_fields": len(H) - 3,
        "report": rep.to_dict(),
        "rank6_fraction_of_interior": ok / interior if interior else 0.0,
        "detY_mask_voxels": mY.count,
    }
    write_json(Path(cfg["out"]) / "diagnose_report.json", report)
    return report


# ------------------------------------------------------------------- sweep


def run_sweep(cfg: dict) -> list[dict]:
    """Rows ``(delta, h, s, w_s_inf_error, valid_voxel_fraction)``.

    ``error_reference = "truth"`` measures against the exact tensor (so the
    ``delta = 0`` rows give the discretization error); ``"noise_free"``
    measures against the reconstruction from unperturbed data, isolating
    the noise amplification.  With ``repeats > 1`` the error is the mean
    over seeds ``seed .. seed + repeats - 1``.
    """
    sw = cfg["sweep"]
    gamma0 = parse_gamma0(sw["gamma0"])
    omega, mu0 = float(cfg["omega"]), float(cfg["mu0"])
    frame = plane_wave_frame(gamma0, omega, mu0)
    rc = ReconConfig(fd=FDConfig(int(cfg["fd_order"])), omega=omega, mu0=mu0)
    s_values = [int(s) for s in sw["s_values"]]
    deltas = [float(d) for d in sw["deltas"]]
    if any(d < 0 for d in deltas):
        raise ConfigError("deltas must be non-negative")
    ref_kind = sw["error_reference"]
    if ref_kind not in ("truth", "noise_free"):
        raise ConfigError("error_reference must be 'truth' or 'noise_free'")
    repeats = int(sw["repeats"])
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    tasks = []
    for n in sw["grids"]:
        grid = _grid_from_config({**cfg, "grid": int(n), "spacing": None})
        H = frame_H_list(frame, grid)
        base = reconstruct(H, rc)
        truth = MatrixField(grid, np.broadcast_to(gamma0, grid.dims + (3, 3)), "symmetric")
        ref = truth if ref_kind == "truth" else base.gamma
        for delta in deltas:
            tasks.append((grid, H, base, ref, delta))

    def row_block(task):
        grid, H, base, ref, delta = task
        errs = {s: [] for s in s_values}
        fracs = []
        for rep in range(repeats if delta > 0 else 1):
            spec = NoiseSpec(delta, int(sw["smoothing_radius"]), int(cfg["seed"]) + rep)
            res = base if delta == 0 else reconstruct(add_noise_all(H, spec), rc)
            mask = res.report.valid_mask
            if ref_kind == "noise_free":
                mask = mask & base.report.valid_mask
            fracs.append(mask.fraction)
            for s in s_values:
                errs[s].append(error_norms(res.gamma, ref, mask, s, rc))
        return [
            {
                "delta": delta,
                "h": grid.spacing[0],
                "s": s,
                "w_s_inf_error": float(np.mean(errs[s])),
                "valid_voxel_fraction": float(np.mean(fracs)),
            }
            for s in s_values
        ]

    return [row for block in _pmap(row_block, tasks) for row in block]


def cmd_sweep(cfg: dict) -> dict:
    rows = run_sweep(cfg)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    path = Path(cfg["out"]) / "sweep.csv"
    _atomic_write_text(path, buf.getvalue())
    return {"command": "sweep", "version": __version__, "csv": str(path), "rows": len(rows)}


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its keys")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--grid", type=int, help="voxels per axis (unit cube)")
    common.add_argument("--fd-order", type=int, choices=(2, 4))
    common.add_argument("--omega", type=float)
    common.add_argument("--mu0", type=float)

    p = argparse.ArgumentParser(prog="admitrec", description="Admittivity reconstruction from internal magnetic fields.")
    p.add_argument("--version", action="version", version=f"admitrec {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="synthesize magnetic-field data")
    g.add_argument("--mode", choices=("frame", "fdfd"))
    g.add_argument("--gamma0", help="preset (identity, anisotropic, isotropic) or JSON")
    g.add_argument("--gamma-field", help="smooth_isotropic, constant or a container path")
    g.add_argument("--boundary", help="frame, cgo or a container with boundary_tangential_E fields")
    g.add_argument("--delta", type=float)
    g.add_argument("--smoothing-radius", type=int)
    g.add_argument("--include-E", action="store_const", const=True, default=None)

    r = sub.add_parser("reconstruct", parents=[common], help="reconstruct the admittivity")
    r.add_argument("--input")
    r.add_argument("--mode", choices=("aniso", "iso"))
    r.add_argument("--solver-mode", choices=("least_squares", "cramer6"))
    r.add_argument("--num-fields", type=int)
    r.add_argument("--s-values", type=int, nargs="+")
    r.add_argument("--anchor-index", type=int, nargs=3)
    r.add_argument("--anchor-value", type=float, nargs=2, metavar=("RE", "IM"))

    d = sub.add_parser("diagnose", parents=[common], help="check the frame and full-rank hypotheses")
    d.add_argument("--input")
    d.add_argument("--extra-fields", type=int)

    s = sub.add_parser("sweep", parents=[common], help="noise/grid stability sweep (CSV)")
    s.add_argument("--gamma0")
    s.add_argument("--deltas", type=float, nargs="+")
    s.add_argument("--grids", type=int, nargs="+")
    s.add_argument("--s-values", type=int, nargs="+")
    s.add_argument("--smoothing-radius", type=int)
    s.add_argument("--repeats", type=int)
    s.add_argument("--error-reference", choices=("truth", "noise_free"))
    return p


_TOP_KEYS = ("out", "seed", "grid", "fd_order", "omega", "mu0")


def effective_config(args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(user) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        _deep_update(cfg, user)
    ns = vars(args)
    for key in _TOP_KEYS:
        if ns.get(key) is not None:
            cfg[key] = ns[key]
    section = cfg[args.command]
    skip = set(_TOP_KEYS) | {"config", "command"}
    for key, val in ns.items():
        if key in skip or val is None:
            continue
        if key not in section:
            raise ConfigError(f"flag {key} does not apply to {args.command}")
        section[key] = val
    if cfg["fd_order"] not in (2, 4):
        raise ConfigError(f"fd_order must be 2 or 4, got {cfg['fd_order']!r}")
    for key in ("omega", "mu0"):
        if not float(cfg[key]) > 0:
            raise ConfigError(f"{key} must be positive")
    return cfg


_PRECONDITION = (
    ConfigError,
    PreconditionError,
    EllipticityError,
    NotDiagonalizableError,
    GridError,
    MaskError,
    ContainerError,
)


def _classify(exc: BaseException) -> int:
    if isinstance(exc, SolverError):
        return 2 if "budget" in str(exc) else 1
    if isinstance(exc, _PRECONDITION):
        return 2
    if isinstance(exc, (ValueError, KeyError, TypeError)) and not isinstance(exc, AdmitrecError):
        # raised while validating user input (dataclass checks, parsing)
        return 2
    return 1


COMMANDS = {"generate": cmd_generate, "reconstruct": cmd_reconstruct, "diagnose": cmd_diagnose, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out = None
    try:
        cfg = effective_config(args)
        out = Path(cfg["out"])
        result = COMMANDS[args.command](cfg)
    except Exception as exc:  # noqa: BLE001  (top-level reporting)
        code = _classify(exc)
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code, "command": args.command}
        sys.stderr.write(_dumps(err))
        if out is not None:
            try:
                write_json(out / "error.json", err)
            except OSError:
                pass
        return code
    sys.stdout.write(_dumps(result))
    return 0


if __name__ == "__main__":
    sys.exit(main())
