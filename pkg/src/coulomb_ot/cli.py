"""Batch front-end: ``coulomb-ot {solve,smooth,fermionize,sweep,constants}``.

Runs are described by a JSON config (``version: 1``).  Every run writes
``summary.json`` and ``report.csv`` into ``--out``; floats carry 17
significant digits and keys are sorted, so identical configs give
byte-identical files.

Exit codes: 0 success, 1 other library error, 2 bad arguments or config,
3 size cap exceeded, 4 solver did not converge (partial summary written).
"""

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import jsonschema
import numpy as np
from threadpoolctl import threadpool_limits

from . import fermion, gamma_limit, grid, smoothing, transport
from .dgf1 import write_field
from .exceptions import CapExceededError, ConvergenceError, CoulombOTError

COMMANDS = ("solve", "smooth", "fermionize", "sweep", "constants")
CONFIG_VERSION = 1

_NUM = {"type": "number"}
_VEC = {"oneOf": [_NUM, {"type": "array", "items": _NUM, "minItems": 1}]}
_GAUSS = {
    "type": "object",
    "properties": {"family": {"const": "gaussian"}, "mu": _VEC, "sigma": {"type": "number", "exclusiveMinimum": 0}},
    "required": ["family", "mu", "sigma"],
    "additionalProperties": False,
}
DENSITY_SCHEMA = {
    "oneOf": [
        _GAUSS,
        {
            "type": "object",
            "properties": {"family": {"const": "mixture"},
                           "weights": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                           "components": {"type": "array", "items": _GAUSS, "minItems": 1}},
            "required": ["family", "weights", "components"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"family": {"const": "uniform"}, "low": _VEC, "high": _VEC},
            "required": ["family", "low", "high"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"family": {"const": "cells"},
                           "values": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}},
            "required": ["family", "values"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"family": {"const": "file"}, "path": {"type": "string"}},
            "required": ["family", "path"],
            "additionalProperties": False,
        },
    ]
}
_POS_LIST = {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1}
CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "version": {"const": CONFIG_VERSION},
        "command": {"enum": list(COMMANDS)},
        "grid": {
            "type": "object",
            "properties": {"d": {"type": "integer", "minimum": 1, "maximum": 4}, "box_min": _VEC, "box_max": _VEC,
                           "n": {"type": "integer", "minimum": 2}},
            "required": ["d", "box_min", "box_max", "n"],
            "additionalProperties": False,
        },
        "density": DENSITY_SCHEMA,
        "N": {"enum": [2, 3]},
        "solver": {
            "type": "object",
            "properties": {"method": {"enum": ["exact-lp", "entropic"]},
                           "diagonal": {"enum": ["forbid", "truncate"]},
                           "alpha": {"type": "number", "exclusiveMinimum": 0},
                           "cap": {"type": "integer", "minimum": 1},
                           "eta": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, _POS_LIST]},
                           "tol": {"type": "number", "exclusiveMinimum": 0},
                           "max_iter": {"type": "integer", "minimum": 1}},
            "additionalProperties": False,
        },
        "eps": _POS_LIST,
        "eps_cells": _POS_LIST,
        "strip_radius": {"type": "number", "exclusiveMinimum": 0},
        "hbar": {"oneOf": [_POS_LIST, {
            "type": "object",
            "properties": {"max": {"type": "number", "exclusiveMinimum": 0},
                           "min": {"type": "number", "exclusiveMinimum": 0},
                           "per_decade": {"type": "integer", "minimum": 1}},
            "required": ["max", "min"],
            "additionalProperties": False,
        }]},
        "statistics": {"enum": ["bosonic", "fermionic"]},
        "aux": {"enum": ["trig", "smoothstep"]},
        "dump_fields": {"type": "boolean"},
        "bl_tests": {"type": "integer", "minimum": 1},
    },
    "required": ["version", "grid", "density"],
    "additionalProperties": False,
}


class ConfigError(Exception):
    pass


# --- output helpers ----------------------------------------------------------


def _fmt(x):
    return format(float(x), ".17g")


def _clean(obj):
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(_fmt(x)) if math.isfinite(x) else repr(x)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# --- config ------------------------------------------------------------------


def load_config(path):
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config {where}: {exc.message}") from exc
    dens = cfg["density"]
    if dens["family"] == "file":
        p = Path(dens["path"])
        if not p.is_absolute():
            p = path.parent / p
        if not p.exists():
            raise ConfigError(f"density file {p} does not exist")
        dens["path"] = str(p)
    return cfg


def _source(spec):
    fam = spec["family"]
    if fam == "gaussian":
        return grid.gaussian(spec["mu"], spec["sigma"])
    if fam == "mixture":
        return grid.mixture(spec["weights"], [_source(c) for c in spec["components"]])
    if fam == "uniform":
        return grid.uniform(spec["low"], spec["high"])
    if fam == "cells":
        return np.asarray(spec["values"], dtype=float)
    return spec["path"]


def _density(cfg):
    g = cfg["grid"]
    gs = grid.build_grid(g["d"], g["box_min"], g["box_max"], g["n"])
    return grid.ingest_density(gs, _source(cfg["density"]))


def _solver_kwargs(cfg):
    s = dict(cfg.get("solver", {}))
    if isinstance(s.get("eta"), list):
        s["eta"] = tuple(s["eta"])
    return s


def _solve(cfg, rho):
    kw = _solver_kwargs(cfg)
    method = kw.pop("method", None)
    if method is None:
        method = "exact-lp" if rho.grid.n_cells ** cfg.get("N", 2) <= transport.lp_cap() else "entropic"
    return transport.solve_mmot(rho, cfg.get("N", 2), method, **kw)


def _widths(cfg, rho):
    h = float(rho.grid.h.max())
    if "eps" in cfg:
        return [float(e) for e in cfg["eps"]]
    return [float(c) * h for c in cfg.get("eps_cells", [4.0])]


def _hbars(cfg):
    hb = cfg.get("hbar", {"max": 1e-1, "min": 1e-4})
    if isinstance(hb, list):
        return [float(v) for v in hb]
    return gamma_limit.hbar_schedule(hb["max"], hb["min"], hb.get("per_decade", 4))


# --- commands ----------------------------------------------------------------


def cmd_constants(args, cfg, out):
    rows = []
    for d in args.dims:
        k, K = smoothing.mollifier_constant(d)
        rows.append((d, k, K))
    summary = {"command": "constants", "constants": [{"d": d, "k": k, "K": K} for d, k, K in rows]}
    return summary, _csv(("d", "k", "K"), rows), {}


def cmd_solve(args, cfg, out):
    rho = _density(cfg)
    sol = _solve(cfg, rho)
    N = cfg.get("N", 2)
    alpha = transport.offdiag_radius(rho, N)
    summary = {
        "command": "solve",
        "cost": sol.cost,
        "method": sol.method,
        "status": sol.status,
        "residuals": sol.residuals,
        "iterations": sol.iterations,
        "offdiag_radius": alpha,
        "support_gap": transport.support_gap(sol.plan),
        "diagonal_mass": None if alpha is None else transport.diagonal_mass(sol.plan, alpha),
    }
    rows = [(i, r) for i, r in enumerate(sol.residuals)]
    fields = {"plan.dgf1": sol.plan} if cfg.get("dump_fields") else {}
    return summary, _csv(("axis", "marginal_l1"), rows), fields


def cmd_smooth(args, cfg, out):
    rho = _density(cfg)
    sol = _solve(cfg, rho)
    plan = transport.symmetrize(sol.plan)
    records, rows, fields = [], [], {}
    for eps in _widths(cfg, rho):
        if "strip_radius" in cfg:
            sp = smoothing.regularize_general(plan, rho, cfg["strip_radius"], eps)
        else:
            sp = smoothing.smooth_plan(plan, rho, eps)
        rec = sp.summary()
        if sp.p_restored is not None:
            rec["bl_distance"] = smoothing.bl_distance(sp.p_restored, plan, cfg.get("bl_tests", 64), args.seed)
            rec["support_gap"] = transport.support_gap(sp.p_restored)
            if cfg.get("dump_fields"):
                fields[f"p_eps_{len(records)}.dgf1"] = sp.p_restored
        records.append(rec)
        rows.append((rec["eps"], rec["mass"], rec["marginal_err"], rec["kinetic"], rec["kinetic_bound"],
                     rec["cost"]))
    summary = {"command": "smooth", "C_ref": sol.cost, "records": records}
    header = ("eps", "mass", "marginal_err", "kinetic", "kinetic_bound", "cost")
    return summary, _csv(header, rows), fields


def cmd_fermionize(args, cfg, out):
    rho = _density(cfg)
    N = cfg.get("N", 2)
    ctx = gamma_limit.RecoveryContext(rho, N, _solve(cfg, rho), aux=cfg.get("aux", "trig"))
    eps = ctx.resolve(_widths(cfg, rho)[0])
    wf = ctx.wavefunction(eps, cfg.get("statistics", "fermionic"))
    report = fermion.verify_statistics(wf)
    rows = []
    for s in fermion.spin_states(N):
        v = wf.component(s)
        rows.append((s, float(np.sum(np.abs(v) ** 2) * wf.psi.cell_volume)))
    summary = {"command": "fermionize", "eps": eps, "manifest": wf.manifest(), "report": report.as_dict(),
               "kinetic": wf.kinetic_energy(), "vee": gamma_limit.vee_of(wf)}
    if cfg.get("dump_fields"):
        fermion.write_wavefunction(out / "wavefunction", wf)
    return summary, _csv(("spin", "norm2"), rows), {}


def cmd_sweep(args, cfg, out):
    rho = _density(cfg)
    N = cfg.get("N", 2)
    ctx = gamma_limit.RecoveryContext(rho, N, _solve(cfg, rho), aux=cfg.get("aux", "trig"))
    rep = gamma_limit.sweep(rho, _hbars(cfg), cfg.get("statistics", "bosonic"), N, context=ctx,
                            density=json.dumps(cfg["density"], sort_keys=True))
    summary = dict(rep.summary(), command="sweep")
    if not rep.complete:
        raise _Partial(summary, rep.to_csv())
    return summary, rep.to_csv(), {}


class _Partial(Exception):
    def __init__(self, summary, report):
        super().__init__(summary.get("error", "incomplete"))
        self.summary = summary
        self.report = report


HANDLERS = {"constants": cmd_constants, "solve": cmd_solve, "smooth": cmd_smooth,
            "fermionize": cmd_fermionize, "sweep": cmd_sweep}


# --- entry point -------------------------------------------------------------


def _dims(text):
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split("..", 1))
            dims = list(range(lo, hi + 1))
        else:
            dims = [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a range like 1..4 or a list like 1,3, got {text!r}")
    if not dims or any(d not in (1, 2, 3, 4) for d in dims):
        raise argparse.ArgumentTypeError("dimensions must lie in 1..4")
    return dims


def build_parser():
    parser = argparse.ArgumentParser(prog="coulomb-ot", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=name != "constants")
        p.add_argument("--out", type=Path, default=Path("."))
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        if name == "constants":
            p.add_argument("--d", dest="dims", type=_dims, default=[1, 2, 3, 4])
    return parser


def _error(code, kind, message):
    sys.stderr.write(dumps({"error": kind, "message": message, "exit": code}))
    return code


def _write(out, summary, report, fields):
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(dumps(summary))
    (out / "report.csv").write_text(report)
    for name, f in fields.items():
        write_field(out / name, f)


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.seed < 0 or args.seed >= 2**64:
        return _error(2, "config", "--seed must be an unsigned 64-bit integer")
    if args.threads < 1:
        return _error(2, "config", "--threads must be positive")
    cfg = {}
    if args.config is not None:
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            return _error(2, "config", str(exc))
        if cfg.get("command", args.command) != args.command:
            return _error(2, "config", f"config is for {cfg['command']!r}, not {args.command!r}")
    try:
        with threadpool_limits(args.threads):
            summary, report, fields = HANDLERS[args.command](args, cfg, args.out)
    except CapExceededError as exc:
        return _error(3, "cap", str(exc))
    except ConvergenceError as exc:
        partial = {"command": args.command, "complete": False, "error": str(exc),
                   "residuals": exc.residuals, "iterations": exc.iterations}
        _write(args.out, partial, "", {})
        return _error(4, "convergence", str(exc))
    except _Partial as exc:
        _write(args.out, exc.summary, exc.report, {})
        return _error(4, "incomplete", str(exc))
    except CoulombOTError as exc:
        # invalid values that slipped past the schema are config errors too
        return _error(2 if isinstance(exc, ValueError) else 1, type(exc).__name__, str(exc))
    _write(args.out, summary, report, fields)
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
