"""Command-line front end: ``ab-wavelab run | validate | sweep``.

Configs are strict JSON (see README for the schema).  Exit codes: 0 on
success, 2 on validation failure, 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import experiments as ex
from .beams import BeamSpec, beam_quadrature_value, kannai_quadrature, kannai_stationary_phase, straight_expansion
from .core import ConvexPolygon, Disk, Domain, GridField, Obstacle, PhysicalConstants, Segment
from .errors import ABWaveError, NumericalError, ParseError, ValidationError
from .gauge import FluxTerm, GaugeField
from .solver import Dirichlet, SolverConfig, disk_grid, evolve_moving_domain, to_abwf, to_csv

EXPERIMENTS = ("magnetic_single", "magnetic_broken", "mirror", "electric", "beam_validate", "solver_validate")
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3
REPORT_VERSION = 1


# ----------------------------------------------------------------------------
# schema

_MISSING = object()


@dataclass(frozen=True)
class F:
    """Field spec: kind is num, int, str, bool, vec2, obj, list or a nested schema dict."""

    kind: Any
    default: Any = _MISSING
    choices: Optional[Tuple[str, ...]] = None
    positive: bool = False
    nullable: bool = False
    item: Any = None


class _Source:
    """Raw JSON text, used to point diagnostics at a line and column."""

    def __init__(self, text: str):
        self.text = text

    def locate(self, key: str) -> Tuple[Optional[int], Optional[int]]:
        i = self.text.find(json.dumps(key))
        if i < 0:
            return None, None
        line = self.text.count("\n", 0, i) + 1
        col = i - (self.text.rfind("\n", 0, i) + 1) + 1
        return line, col


def _fail(path: str, msg: str, src: Optional[_Source] = None, key: Optional[str] = None):
    line = col = None
    if src is not None and key is not None:
        line, col = src.locate(key)
    if line is not None:
        raise ParseError(f"{path}: {msg}", line, col)
    raise ValidationError(f"{path}: {msg}")


def _check(value, spec: F, path: str, src: _Source, key: str):
    if value is None and spec.nullable:
        return None
    kind = spec.kind
    if isinstance(kind, dict):
        if not isinstance(value, dict):
            _fail(path, "expected an object", src, key)
        return _apply(value, kind, path, src)
    if kind == "num":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            _fail(path, "expected a finite number", src, key)
        if spec.positive and not value > 0:
            _fail(path, "must be positive", src, key)
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            _fail(path, "expected an integer", src, key)
        if spec.positive and not value > 0:
            _fail(path, "must be positive", src, key)
        return int(value)
    if kind == "str":
        if not isinstance(value, str):
            _fail(path, "expected a string", src, key)
        if spec.choices and value not in spec.choices:
            _fail(path, f"must be one of {list(spec.choices)}", src, key)
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            _fail(path, "expected true or false", src, key)
        return value
    if kind == "vec2":
        if (not isinstance(value, list) or len(value) != 2
                or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)):
            _fail(path, "expected [x1, x2]", src, key)
        return [float(v) for v in value]
    if kind == "list":
        if not isinstance(value, list):
            _fail(path, "expected a list", src, key)
        return [_check(v, spec.item, f"{path}[{i}]", src, key) for i, v in enumerate(value)]
    if callable(kind):
        return kind(value, path, src, key)
    raise AssertionError(kind)


def _apply(obj: dict, schema: Dict[str, F], path: str, src: _Source) -> dict:
    for k in obj:
        if k not in schema:
            _fail(f"{path}.{k}" if path else k, "unknown key", src, k)
    out = {}
    for k, spec in schema.items():
        p = f"{path}.{k}" if path else k
        if k in obj:
            out[k] = _check(obj[k], spec, p, src, k)
        elif spec.default is _MISSING:
            _fail(p, "required key missing", src, path.split(".")[-1] if path else None)
        elif isinstance(spec.kind, dict) and isinstance(spec.default, dict):
            out[k] = _apply(copy.deepcopy(spec.default), spec.kind, p, src)
        else:
            out[k] = copy.deepcopy(spec.default)
    return out


def _shape(value, path, src, key):
    if not isinstance(value, dict) or "type" not in value:
        _fail(path, "shape needs a 'type' (disk, polygon or segment)", src, key)
    t = value["type"]
    schemas = {
        "disk": {"type": F("str"), "center": F("vec2"), "radius": F("num", positive=True)},
        "polygon": {"type": F("str"), "vertices": F("list", item=F("vec2"))},
        "segment": {"type": F("str"), "a": F("vec2"), "b": F("vec2"), "thickness": F("num", 0.0)},
    }
    if t not in schemas:
        _fail(f"{path}.type", f"unknown shape type {t!r}", src, "type")
    return _apply(value, schemas[t], path, src)


def _k_choice(value, path, src, key):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if not value > 0:
            _fail(path, "must be positive", src, key)
        return float(value)
    if isinstance(value, dict):
        return _apply(value, {"resonant": F("int", positive=True), "k0": F("num", 0.0)}, path, src)
    _fail(path, "expected a number or {\"resonant\": n, \"k0\": k0}", src, key)


CONSTANTS = {"hbar": F("num", 1.0, positive=True), "mass": F("num", 1.0, positive=True),
             "charge": F("num", 1.0, positive=True), "light_speed": F("num", 1.0, positive=True)}
OBSTACLE = {"id": F("str"), "shape": F(_shape)}
DOMAIN = {"bounding_box": F("list", item=F("vec2")), "obstacles": F("list", [], item=F(OBSTACLE))}
FLUX = {"obstacle": F("str"), "flux": F("num"), "center": F("vec2", None, nullable=True)}
BEAM = {"base_point": F("vec2"), "direction": F("vec2"), "delta1": F("num", positive=True),
        "delta2": F("num", positive=True)}
PROBE = {"center": F("vec2"), "radius": F("num", 0.0), "samples": F("int", 9, positive=True)}
PDE = {"points_per_wavelength": F("num", 12.0, positive=True), "dt": F("num", None, nullable=True, positive=True),
       "margin": F("num", 1.0, positive=True), "rim": F("num", 0.5, positive=True)}

COMMON = {
    "experiment": F("str", choices=EXPERIMENTS),
    "output_dir": F("str", "out"),
    "seed": F("int", 0),
    "constants": F(CONSTANTS, {}),
}

MAGNETIC = {
    "domain": F(DOMAIN),
    "fluxes": F("list", item=F(FLUX)),
    "beams": F({"omega": F(BEAM), "theta": F(BEAM)}),
    "k": F(_k_choice),
    "probe": F(PROBE),
    "time": F("num", None, nullable=True, positive=True),
    "flux_obstacle": F("str", None, nullable=True),
    "oracle": F("str", "beam", choices=("beam", "pde", "both")),
    "beam_method": F("str", "stationary", choices=("stationary", "quadrature")),
    "tolerance": F("num", None, nullable=True, positive=True),
    "pde": F(PDE, {}),
}

SCHEMAS: Dict[str, Dict[str, F]] = {
    "magnetic_single": MAGNETIC,
    "magnetic_broken": MAGNETIC,
    "mirror": {
        "source": F("vec2"),
        "target": F("vec2"),
        "mirrors": F("list", item=F({"a": F("vec2"), "b": F("vec2"), "thickness": F("num", 0.0)})),
        "obstacle": F(OBSTACLE),
        "flux": F("num"),
        "k": F("num", positive=True),
        "delta1": F("num", 0.3, positive=True),
        "delta2": F("num", 0.05, positive=True),
        "probe": F({"radius": F("num", 0.0), "samples": F("int", 9, positive=True)}, {}),
    },
    "electric": {
        "alpha1": F("num"),
        "alpha2": F("num", 0.0),
        "T_hold": F("num", 0.5, positive=True),
        "connected": F("bool", False),
        "grid": F({"spacing": F("num", 0.01, positive=True), "dt": F("num", 1e-3, positive=True)}, {}),
        "packets": F({"offset": F("num", 0.75), "width": F("num", 0.08, positive=True), "k0": F("num", 3.0)}, {}),
        "threshold": F("num", ex.DETECTION_THRESHOLD, positive=True),
        "sample_times": F("list", None, nullable=True, item=F("num")),
        "dump_fields": F("bool", False),
        "field_format": F("str", "csv", choices=("csv", "abwf")),
    },
    "beam_validate": {
        "k_values": F("list", [20.0, 40.0, 80.0], item=F("num", positive=True)),
        "flux": F("num", 1.0),
        "offset": F("num", 0.3),
        "depth": F("num", 0.5, positive=True),
        "t": F("num", 0.1, positive=True),
        "plane_wave_k": F("num", 20.0, positive=True),
    },
    "solver_validate": {
        "levels": F("list", [[0.04, 4e-3], [0.02, 2e-3], [0.01, 1e-3]], item=F("vec2")),
        "t": F("num", 0.02, positive=True),
        "norm_steps": F("int", 1000, positive=True),
        "norm_grid": F({"spacing": F("num", 0.02, positive=True), "dt": F("num", 1e-3, positive=True)}, {}),
    },
}


def parse_config(text: str) -> dict:
    """Parse and normalize a config; raises ParseError / ValidationError."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", e.lineno, e.colno) from None
    src = _Source(text)
    if not isinstance(raw, dict):
        raise ParseError("config must be a JSON object", 1, 1)
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        _fail("experiment", f"must be one of {list(EXPERIMENTS)}", src, "experiment")
    return _apply(raw, {**COMMON, **SCHEMAS[exp]}, "", src)


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ValidationError(f"cannot read {path}: {e.strerror}") from None
    return parse_config(text)


# ----------------------------------------------------------------------------
# building scenarios

def _constants(cfg) -> PhysicalConstants:
    return PhysicalConstants(**cfg["constants"])


def _build_shape(d):
    if d["type"] == "disk":
        return Disk(tuple(d["center"]), d["radius"])
    if d["type"] == "polygon":
        return ConvexPolygon(tuple(tuple(v) for v in d["vertices"]))
    return Segment(tuple(d["a"]), tuple(d["b"]), d["thickness"])


def _build_domain(d) -> Domain:
    if len(d["bounding_box"]) != 2:
        raise ValidationError("domain.bounding_box must be [[lo1, lo2], [hi1, hi2]]")
    obs = tuple(Obstacle(_build_shape(o["shape"]), o["id"]) for o in d["obstacles"])
    return Domain(obs, tuple(tuple(b) for b in d["bounding_box"]))


def _build_field(fluxes, domain: Domain, c: PhysicalConstants) -> GaugeField:
    terms = []
    for f in fluxes:
        try:
            o = domain.obstacle(f["obstacle"])
        except KeyError:
            raise ValidationError(f"fluxes: unknown obstacle {f['obstacle']!r}") from None
        center = tuple(f["center"]) if f["center"] is not None else tuple(o.shape.interior_point())
        terms.append(FluxTerm(center, f["flux"], o.id))
    fld = GaugeField(c, tuple(terms))
    fld.validate(domain)
    return fld


def _beam(b, k, c) -> BeamSpec:
    return BeamSpec(tuple(b["base_point"]), tuple(b["direction"]), k, b["delta1"], b["delta2"], constants=c)


def build_magnetic(cfg) -> ex.MagneticABSpec:
    c = _constants(cfg)
    domain = _build_domain(cfg["domain"])
    fld = _build_field(cfg["fluxes"], domain, c)
    kc = cfg["k"]
    sel = ex.Given(kc) if isinstance(kc, float) else ex.Resonant(kc["resonant"], kc["k0"])
    k_nominal = kc if isinstance(kc, float) else max(kc["k0"], 1.0)
    spec = ex.MagneticABSpec(
        domain, fld,
        _beam(cfg["beams"]["omega"], k_nominal, c), _beam(cfg["beams"]["theta"], k_nominal, c),
        tuple(cfg["probe"]["center"]), cfg["probe"]["radius"], sel,
        time=cfg["time"], broken=cfg["experiment"] == "magnetic_broken",
        flux_obstacle=cfg["flux_obstacle"], probe_samples=cfg["probe"]["samples"], tolerance=cfg["tolerance"],
    )
    if spec.flux_obstacle is not None:
        try:
            domain.obstacle(spec.flux_obstacle)
        except KeyError:
            raise ValidationError(f"flux_obstacle: unknown obstacle {spec.flux_obstacle!r}") from None
    return spec


def _pde_options(cfg) -> ex.PdeOptions:
    p = cfg["pde"]
    return ex.PdeOptions(p["points_per_wavelength"], p["dt"], p["margin"], p["rim"])


def _check_magnetic(cfg, spec: ex.MagneticABSpec) -> None:
    k = ex.selected_k(spec)
    spec = ex._with_k(spec, k)
    if spec.broken:
        spec.beam_omega.check_support(spec.domain)
    else:
        for b in (spec.beam_omega, spec.beam_theta):
            b.check_support(spec.domain, travel=b.length)


def build_mirror(cfg):
    c = _constants(cfg)
    if len(cfg["mirrors"]) != 2:
        raise ValidationError("mirror: exactly two mirrors are required")
    mirrors = tuple(Segment(tuple(m["a"]), tuple(m["b"]), m["thickness"]) for m in cfg["mirrors"])
    o = cfg["obstacle"]
    obst = Obstacle(_build_shape(o["shape"]), o["id"])
    fld = GaugeField(c, (FluxTerm(tuple(obst.shape.interior_point()), cfg["flux"], obst.id),))
    return mirrors, obst, fld


def build_electric(cfg):
    c = _constants(cfg)
    p = cfg["packets"]
    spec = ex.fig4_spec(cfg["alpha1"], cfg["alpha2"], cfg["T_hold"], c,
                        ex.packet_pair(p["offset"], p["width"], p["k0"]), connected=cfg["connected"])
    g = cfg["grid"]
    conf = SolverConfig(disk_grid(g["spacing"]), g["dt"], c, Dirichlet())
    return spec, conf


def validate_config(cfg) -> None:
    """Every invariant check that does not require running the experiment."""
    exp = cfg["experiment"]
    if exp in ("magnetic_single", "magnetic_broken"):
        _check_magnetic(cfg, build_magnetic(cfg))
    elif exp == "mirror":
        build_mirror(cfg)
    elif exp == "electric":
        build_electric(cfg)
    elif exp == "solver_validate":
        for h, dt in cfg["levels"]:
            if not (h > 0 and dt > 0):
                raise ValidationError("solver_validate.levels: spacing and dt must be positive")


# ----------------------------------------------------------------------------
# running

@dataclass
class Outcome:
    result: dict
    profile: Optional[np.ndarray] = None
    profile_header: Tuple[str, ...] = ("x1", "x2", "value")
    fields: Optional[Dict[str, GridField]] = None


def _run_magnetic(cfg) -> Outcome:
    spec = build_magnetic(cfg)
    if spec.broken:
        rep = ex.magnetic_ab_broken(spec, cfg["oracle"], _pde_options(cfg))
    else:
        rep = ex.magnetic_ab_single(spec, cfg["oracle"], cfg["beam_method"], _pde_options(cfg))
    return Outcome(rep.to_json(), rep.profile)


def _run_mirror(cfg) -> Outcome:
    mirrors, obst, fld = build_mirror(cfg)
    pr = cfg["probe"]
    rep = ex.mirror_interferometer(cfg["source"], cfg["target"], mirrors, obst, fld, cfg["k"], cfg["delta1"],
                                   cfg["delta2"], pr["radius"], pr["samples"])
    return Outcome(rep.to_json(), rep.profile)


def _run_electric(cfg) -> Outcome:
    spec, conf = build_electric(cfg)
    rep = ex.electric_ab(spec, conf, cfg["sample_times"], cfg["threshold"])
    prof = np.column_stack([rep.times, rep.differences])
    fields = None
    if cfg["dump_fields"]:
        fields = _electric_fields(spec, conf, rep.times[-1] if rep.times else spec.schedule.t_end)
    return Outcome(rep.to_json(), prof, ("t", "relative_density_difference"), fields)


def _electric_fields(spec, conf, t_last) -> Dict[str, GridField]:
    sched = spec.schedule
    t_hold = sched.T_hold + 0.5
    zero = ex.replace_potentials(sched)
    fin = GridField(conf.grid, spec.final_state(conf.grid.points()), sched.mask(conf.grid, t_hold))
    u0 = ex.backward_evolve(fin, zero, t_hold, conf, t_final=t_hold)
    with_v = evolve_moving_domain(u0, sched, conf, [t_last])[-1]
    without = evolve_moving_domain(u0, zero, conf, [t_last])[-1]
    return {"initial": u0, "final_with_potential": with_v, "final_without_potential": without}


def _run_beam_validate(cfg) -> Outcome:
    c = _constants(cfg)
    rows, diffs = [], []
    for k in cfg["k_values"]:
        spec, fld = ex.kannai_scenario(k, cfg["flux"], cfg["offset"], cfg["depth"], c)
        e = straight_expansion(spec, fld)
        x = np.zeros(2)
        q = beam_quadrature_value(e, x, cfg["t"])
        sp = kannai_stationary_phase(e, fld, x, cfg["t"])
        d = abs(q - sp) / abs(sp)
        diffs.append(d)
        rows.append([k, d])
    ratios = [diffs[i] / diffs[i + 1] for i in range(len(diffs) - 1)]
    k = cfg["plane_wave_k"]
    om = np.array([0.6, 0.8])
    xp = np.array([0.3, -0.2])
    t = cfg["t"]
    kap = c.mass * k / c.hbar
    w = lambda xx, x0: np.exp(1j * kap * (xx @ om - x0)) + np.exp(1j * kap * (xx @ om + x0))
    val = kannai_quadrature(w, c, xp, t, w_rate=kap)
    exact = 2 * np.exp(-1j * c.mass * k * k * t / (2 * c.hbar) + 1j * kap * float(xp @ om))
    res = {
        "k_values": list(cfg["k_values"]),
        "relative_disagreement": diffs,
        "doubling_ratios": ratios,
        "plane_wave_relative_error": float(abs(val - exact) / abs(exact)),
    }
    return Outcome(res, np.array(rows), ("k", "relative_disagreement"))


def _run_solver_validate(cfg) -> Outcome:
    c = _constants(cfg)
    study = ex.madelung_refinement_study(tuple(tuple(l) for l in cfg["levels"]), cfg["t"], constants=c)
    g = cfg["norm_grid"]
    grid = disk_grid(g["spacing"])
    sched = ex.MovingDomainSchedule.fixed(2.0)
    conf = SolverConfig(grid, g["dt"], c, Dirichlet())
    P = grid.points()
    u0 = GridField(grid, np.exp(-(P[..., 0] ** 2 + P[..., 1] ** 2) / (2 * 0.1 ** 2) + 3j * P[..., 0]),
                   sched.mask(grid, 0.0))
    n0 = u0.norm()
    u1 = evolve_moving_domain(u0, sched, conf, [cfg["norm_steps"] * g["dt"]])[-1]
    res = study.to_json()
    res["norm_drift"] = abs(u1.norm() - n0) / n0
    res["norm_steps"] = cfg["norm_steps"]
    prof = np.column_stack([[l[0] for l in study.levels], [l[1] for l in study.levels], study.transport, study.hj])
    return Outcome(res, prof, ("h", "dt", "transport", "hj"))


RUNNERS: Dict[str, Callable[[dict], Outcome]] = {
    "magnetic_single": _run_magnetic,
    "magnetic_broken": _run_magnetic,
    "mirror": _run_mirror,
    "electric": _run_electric,
    "beam_validate": _run_beam_validate,
    "solver_validate": _run_solver_validate,
}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def execute(cfg: dict, output_dir: Optional[Path] = None) -> dict:
    """Run a normalized config and write its outputs; returns the report."""
    validate_config(cfg)
    out = Path(output_dir if output_dir is not None else cfg["output_dir"])
    outcome = RUNNERS[cfg["experiment"]](cfg)
    report = {
        "version": REPORT_VERSION,
        "experiment": cfg["experiment"],
        "config": cfg,
        "result": _jsonable(outcome.result),
    }
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    if outcome.profile is not None:
        with open(out / "profile.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(outcome.profile_header)
            for row in np.atleast_2d(outcome.profile):
                w.writerow([repr(float(v)) for v in row])
    if outcome.fields:
        fmt = cfg.get("field_format", "csv")
        for name, fld in outcome.fields.items():
            if fmt == "abwf":
                to_abwf(fld, out / f"{name}.abwf")
            else:
                to_csv(fld, out / f"{name}.csv")
    return report


def _diagnostic(e: ABWaveError) -> dict:
    d = {"error": type(e).__name__, "message": str(e)}
    if isinstance(e, ParseError):
        d["line"], d["column"] = e.line, e.column
    return d


def validate(config_path) -> List[dict]:
    """Full invariant check without running; an empty list means runnable."""
    try:
        validate_config(load_config(config_path))
    except ABWaveError as e:
        return [_diagnostic(e)]
    return []


def _exit_code(e: BaseException) -> int:
    return EXIT_NUMERICAL if isinstance(e, NumericalError) else EXIT_VALIDATION


def run(config_path, output_dir=None) -> int:
    try:
        cfg = load_config(config_path)
        report = execute(cfg, output_dir)
    except ABWaveError as e:
        print(f"ab-wavelab: {type(e).__name__}: {e}", file=sys.stderr)
        return _exit_code(e)
    r = report["result"]
    if "measured_peak" in r:
        print(f"measured_peak {r['measured_peak']:.6g}  predicted {r['predicted']:.6g}")
    return EXIT_OK


def _set_path(cfg: dict, path: str, value) -> dict:
    cfg = copy.deepcopy(cfg)
    keys = path.split(".")
    node = cfg
    for k in keys[:-1]:
        if isinstance(node, list):
            node = node[int(k)]
        else:
            if k not in node:
                raise ValidationError(f"sweep: no key {k!r} in {path!r}")
            node = node[k]
    last = keys[-1]
    if isinstance(node, list):
        node[int(last)] = value
    elif last in node:
        node[last] = value
    else:
        raise ValidationError(f"sweep: no key {last!r} in {path!r}")
    return cfg


def sweep(config_path, param: str, values: Sequence[Any], output_dir=None) -> int:
    """Run the config once per value of ``param`` (a dotted path into the config)."""
    try:
        base = load_config(config_path)
        root = Path(output_dir if output_dir is not None else base["output_dir"])
        rows = []
        for i, v in enumerate(values):
            cfg = parse_config(json.dumps(_set_path(base, param, v)))
            rep = execute(cfg, root / f"sweep_{i:03d}")
            rows.append({"value": v, "result": rep["result"]})
        root.mkdir(parents=True, exist_ok=True)
        with open(root / "sweep.json", "w") as f:
            json.dump({"param": param, "values": list(values), "runs": rows}, f, indent=2, sort_keys=True)
            f.write("\n")
    except ABWaveError as e:
        print(f"ab-wavelab: {type(e).__name__}: {e}", file=sys.stderr)
        return _exit_code(e)
    return EXIT_OK


def _parse_values(text: str) -> list:
    try:
        vals = json.loads(text if text.strip().startswith("[") else f"[{text}]")
    except json.JSONDecodeError as e:
        raise argparse.ArgumentTypeError(f"--values: {e.msg}") from None
    return vals


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = argparse.ArgumentParser(prog="ab-wavelab", description="Aharonov-Bohm wave experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("config")
    p.add_argument("-o", "--output-dir")
    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")
    p = sub.add_parser("sweep", help="run a scenario over a list of parameter values")
    p.add_argument("config")
    p.add_argument("--param", required=True, help="dotted path, e.g. fluxes.0.flux")
    p.add_argument("--values", required=True, type=_parse_values, help="comma list or JSON array")
    p.add_argument("-o", "--output-dir")
    args = ap.parse_args(argv)
    if args.command == "run":
        return run(args.config, args.output_dir)
    if args.command == "validate":
        diags = validate(args.config)
        for d in diags:
            where = f":{d['line']}:{d['column']}" if "line" in d else ""
            print(f"{args.config}{where}: {d['error']}: {d['message']}", file=sys.stderr)
        print(json.dumps(diags))
        return EXIT_OK if not diags else EXIT_VALIDATION
    return sweep(args.config, args.param, args.values, args.output_dir)


if __name__ == "__main__":
    sys.exit(main())
