"""Scenario configuration: YAML loading, defaults and field-precise validation.

Schema version 1.  All quantities are SI (m, s, kg, Pa, N, degrees for
friction and dilation angles).  Top-level blocks:

    schema_version, name, seed,
    grid       {x, y, z}: {lo, hi, dx} or {graded: {dx0, uniform, total, exponent, origin, reverse}}
    materials  {<name>: {model, E, nu, rho, phi, psi, c, density, depth_stiffness, geostatic}}
    points     [{material, lo, hi, ppe}]
    boundary   {rollers, planes: [{axis, value, components}], boxes: [{lo, hi, components}]}
    frame      {nodes, mass, elements, stiffness, fixed, velocity, f_ext} or {preset, ...}
    bodies     [{name, mesh, drivers, mu}]
    contact    {f_N, f_T, search_margin}
    solver     {dt, t_end, gamma, beta, tol_rel, tol_abs, max_iter, max_halvings, quasi_static,
                gravity, gravity_ramp_steps, stabilise_mass, stabilise_stiffness,
                gamma_m_scale, gamma_k_scale, gap_correction, inject_failures}
    output     {dir, every, vtk, stl, checkpoint}
"""
from __future__ import annotations

import copy
import math
from pathlib import Path

import yaml

from ..errors import InvalidConfigError

SCHEMA_VERSION = 1

# relative-density classes of the sand (unit weight in N/m^3, stiffness in Pa)
SAND_TABLE = {
    "38%": dict(E_ref=22.8e6, unit_weight=16.5e3, nu=0.3, phi=32.8, psi=2.8, c=300.0, K0=0.45, m_E=0.58),
    "44%": dict(E_ref=26.4e6, unit_weight=16.7e3, nu=0.3, phi=33.5, psi=3.5, c=300.0, K0=0.44, m_E=0.57),
    "82%": dict(E_ref=49.2e6, unit_weight=18.2e3, nu=0.3, phi=38.3, psi=8.3, c=300.0, K0=0.38, m_E=0.44),
}

SOLVER_DEFAULTS = dict(dt=0.1, t_end=1.0, gamma=0.5, beta=0.25, tol_rel=1e-6, tol_abs=1e-9, max_iter=25,
                       max_halvings=10, quasi_static=False, gravity=[0.0, 0.0, 0.0], gravity_ramp_steps=0,
                       stabilise_mass=True, stabilise_stiffness=True, gamma_m_scale=1.0, gamma_k_scale=1.0,
                       gap_correction=True, gap_tol=1e-4, max_increment=0.5, max_backtracks=6, inject_failures=[])
OUTPUT_DEFAULTS = dict(dir=None, every=1, vtk=True, stl=True, checkpoint=False)
CONTACT_DEFAULTS = dict(f_N=50.0, f_T=25.0, search_margin=None)
AXES = ("x", "y", "z")


def _err(path, msg):
    raise InvalidConfigError(f"{path}: {msg}")


def _num(d, key, path, lo=None, lo_open=False, hi=None, default=None, required=True):
    if key not in d or d[key] is None:
        if default is not None or not required:
            return default
        _err(f"{path}.{key}", "required field missing")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _err(f"{path}.{key}", f"expected a number, got {v!r}")
    v = float(v)
    if not math.isfinite(v):
        _err(f"{path}.{key}", "must be finite")
    if lo is not None and (v < lo or (lo_open and v == lo)):
        _err(f"{path}.{key}", f"must be {'>' if lo_open else '>='} {lo}, got {v}")
    if hi is not None and v > hi:
        _err(f"{path}.{key}", f"must be <= {hi}, got {v}")
    return v


def _vec(d, key, path, n=3, default=None):
    if key not in d:
        if default is not None:
            return list(default)
        _err(f"{path}.{key}", "required field missing")
    v = d[key]
    if not isinstance(v, (list, tuple)) or len(v) != n:
        _err(f"{path}.{key}", f"expected a list of {n} numbers")
    out = []
    for i, a in enumerate(v):
        if isinstance(a, bool) or not isinstance(a, (int, float)) or not math.isfinite(float(a)):
            _err(f"{path}.{key}[{i}]", f"expected a finite number, got {a!r}")
        out.append(float(a))
    return out


def _components(v, path):
    if not isinstance(v, str) or not v or any(ch not in "xyz" for ch in v):
        _err(path, f"expected a subset of 'xyz', got {v!r}")
    return [AXES.index(ch) for ch in sorted(set(v), key=AXES.index)]


def _check_keys(d, allowed, path):
    if not isinstance(d, dict):
        _err(path, "expected a mapping")
    extra = set(d) - set(allowed)
    if extra:
        _err(path, f"unknown field(s) {sorted(extra)}")


def _validate_grid(g, path="grid"):
    _check_keys(g, AXES, path)
    out = {}
    for ax in AXES:
        p = f"{path}.{ax}"
        if ax not in g:
            _err(p, "required field missing")
        a = g[ax]
        if isinstance(a, dict) and "graded" in a:
            _check_keys(a, ("graded",), p)
            gr = a["graded"]
            _check_keys(gr, ("dx0", "uniform", "total", "exponent", "origin", "reverse"), p + ".graded")
            out[ax] = {"graded": dict(
                dx0=_num(gr, "dx0", p + ".graded", lo=0.0, lo_open=True),
                uniform=_num(gr, "uniform", p + ".graded", lo=0.0),
                total=_num(gr, "total", p + ".graded", lo=0.0, lo_open=True),
                exponent=_num(gr, "exponent", p + ".graded", lo=1.0),
                origin=_num(gr, "origin", p + ".graded", default=0.0),
                reverse=bool(gr.get("reverse", False)))}
        else:
            _check_keys(a, ("lo", "hi", "dx"), p)
            lo, hi = _num(a, "lo", p), _num(a, "hi", p)
            dx = _num(a, "dx", p, lo=0.0, lo_open=True)
            if hi <= lo:
                _err(p + ".hi", "must exceed lo")
            out[ax] = dict(lo=lo, hi=hi, dx=dx)
    return out


def _validate_material(m, path):
    _check_keys(m, ("model", "E", "nu", "rho", "phi", "psi", "c", "density", "depth_stiffness", "geostatic",
                    "surface_z", "unit_weight", "K0", "E_ref", "m_E", "p_ref"), path)
    m = dict(m)
    model = m.get("model", "hencky")
    if model not in ("hencky", "drucker_prager"):
        _err(path + ".model", f"unknown model {model!r} (hencky | drucker_prager)")
    dens = m.get("density")
    if dens is not None:
        if dens not in SAND_TABLE:
            _err(path + ".density", f"unknown density class {dens!r} ({' | '.join(SAND_TABLE)})")
        for k, v in SAND_TABLE[dens].items():
            m.setdefault(k, v)
        m.setdefault("E", m["E_ref"])
        if "rho" not in m:
            m["rho"] = m["unit_weight"] / 9.81
    out = dict(model=model, density=dens)
    out["E"] = _num(m, "E", path, lo=0.0, lo_open=True)
    out["nu"] = _num(m, "nu", path, lo=-1.0, lo_open=True, hi=0.4999)
    out["rho"] = _num(m, "rho", path, lo=0.0, lo_open=True)
    if model == "drucker_prager":
        out["phi"] = _num(m, "phi", path, lo=0.0, hi=89.0)
        out["psi"] = _num(m, "psi", path, lo=0.0, hi=out["phi"])
        out["c"] = _num(m, "c", path, lo=0.0, default=0.0)
    out["depth_stiffness"] = bool(m.get("depth_stiffness", False))
    out["geostatic"] = bool(m.get("geostatic", False))
    if out["depth_stiffness"] or out["geostatic"]:
        out["surface_z"] = _num(m, "surface_z", path)
        out["unit_weight"] = _num(m, "unit_weight", path, lo=0.0, lo_open=True)
        out["K0"] = _num(m, "K0", path, lo=0.0, lo_open=True)
    if out["depth_stiffness"]:
        out["E_ref"] = _num(m, "E_ref", path, lo=0.0, lo_open=True)
        out["m_E"] = _num(m, "m_E", path, lo=0.0)
        out["p_ref"] = _num(m, "p_ref", path, lo=0.0, lo_open=True, default=100e3)
        out["c"] = _num(m, "c", path, lo=0.0, default=0.0)
    return out


def _validate_mesh(mesh, path, base):
    if isinstance(mesh, str):
        mesh = {"file": mesh}
    if not isinstance(mesh, dict):
        _err(path, "expected a file path or a generator mapping")
    if "file" in mesh:
        _check_keys(mesh, ("file", "translate", "scale"), path)
        f = Path(mesh["file"])
        if not f.is_absolute():
            f = Path(base) / f
        if not f.exists():
            _err(path + ".file", f"mesh file not found: {f}")
        out = dict(file=str(f))
        if "translate" in mesh:
            out["translate"] = _vec(mesh, "translate", path)
        if "scale" in mesh:
            out["scale"] = _num(mesh, "scale", path, lo=0.0, lo_open=True)
        return out
    gen = mesh.get("generator")
    p = path
    if gen == "box":
        _check_keys(mesh, ("generator", "lo", "hi"), p)
        lo, hi = _vec(mesh, "lo", p), _vec(mesh, "hi", p)
        if any(b <= a for a, b in zip(lo, hi)):
            _err(p + ".hi", "must exceed lo in every direction")
        return dict(generator="box", lo=lo, hi=hi)
    if gen == "icosphere":
        _check_keys(mesh, ("generator", "radius", "subdivisions", "center"), p)
        return dict(generator="icosphere", radius=_num(mesh, "radius", p, lo=0.0, lo_open=True),
                    subdivisions=int(_num(mesh, "subdivisions", p, lo=0.0, default=2.0)),
                    center=_vec(mesh, "center", p))
    if gen == "latlong_sphere":
        _check_keys(mesh, ("generator", "radius", "n_lat", "n_lon", "center", "axis", "phase"), p)
        axis = mesh.get("axis", "z")
        if axis not in ("y", "z"):
            _err(p + ".axis", "must be 'y' or 'z'")
        return dict(generator="latlong_sphere", radius=_num(mesh, "radius", p, lo=0.0, lo_open=True),
                    n_lat=int(_num(mesh, "n_lat", p, lo=3.0, default=11.0)),
                    n_lon=int(_num(mesh, "n_lon", p, lo=3.0, default=16.0)),
                    center=_vec(mesh, "center", p), axis=axis, phase=_num(mesh, "phase", p, default=0.0))
    if gen == "cone":
        _check_keys(mesh, ("generator", "radius", "apex_angle", "shaft_length", "n_seg", "tip", "phase"), p)
        return dict(generator="cone", radius=_num(mesh, "radius", p, lo=0.0, lo_open=True),
                    apex_angle=_num(mesh, "apex_angle", p, lo=1.0, hi=179.0, default=60.0),
                    shaft_length=_num(mesh, "shaft_length", p, lo=0.0, lo_open=True, default=0.5),
                    n_seg=int(_num(mesh, "n_seg", p, lo=3.0, default=24.0)),
                    tip=_vec(mesh, "tip", p), phase=_num(mesh, "phase", p, default=0.5))
    _err(p + ".generator", f"unknown mesh generator {gen!r} (box | icosphere | latlong_sphere | cone) "
                           "and no 'file' given")


def _validate_frame(f, path="frame"):
    if "preset" in f:
        preset = f["preset"]
        if preset == "ring":
            _check_keys(f, ("preset", "center", "ring_radius", "mass", "n_ring", "stiffness", "constrain_y"), path)
            return dict(preset="ring", center=_vec(f, "center", path),
                        ring_radius=_num(f, "ring_radius", path, lo=0.0, lo_open=True),
                        mass=_num(f, "mass", path, lo=0.0, lo_open=True),
                        n_ring=int(_num(f, "n_ring", path, lo=3.0, default=100.0)),
                        stiffness=_num(f, "stiffness", path, lo=0.0, lo_open=True, default=1e9),
                        constrain_y=bool(f.get("constrain_y", True)))
        _err(path + ".preset", f"unknown frame preset {preset!r} (ring)")
    _check_keys(f, ("nodes", "mass", "elements", "stiffness", "fixed", "velocity", "f_ext", "rest_length"), path)
    nodes = f.get("nodes")
    if not isinstance(nodes, list) or not nodes:
        _err(path + ".nodes", "expected a non-empty list of [x, y, z]")
    n = len(nodes)
    xs = [_vec({"n": v}, "n", f"{path}.nodes[{i}]") for i, v in enumerate(nodes)]
    mass = f.get("mass", 0.0)
    mass = [mass] * n if isinstance(mass, (int, float)) else mass
    if not isinstance(mass, list) or len(mass) != n:
        _err(path + ".mass", f"expected a number or a list of {n} numbers")
    for i, m in enumerate(mass):
        _num({"m": m}, "m", f"{path}.mass[{i}]", lo=0.0)
    els = f.get("elements", [])
    for i, e in enumerate(els):
        if not isinstance(e, list) or len(e) != 2 or any(not isinstance(a, int) or not 0 <= a < n for a in e) \
                or e[0] == e[1]:
            _err(f"{path}.elements[{i}]", f"expected two distinct node indices in [0, {n})")
    stiff = _num(f, "stiffness", path, lo=0.0, lo_open=True, default=1e9)
    fixed = {}
    for k, v in (f.get("fixed") or {}).items():
        if not isinstance(k, int) or not 0 <= k < n:
            _err(f"{path}.fixed", f"node index {k!r} out of range")
        fixed[k] = _components(v, f"{path}.fixed[{k}]")
    vel = {}
    for k, v in (f.get("velocity") or {}).items():
        if not isinstance(k, int) or not 0 <= k < n:
            _err(f"{path}.velocity", f"node index {k!r} out of range")
        vel[k] = _vec({"v": v}, "v", f"{path}.velocity[{k}]")
    fext = {}
    for k, v in (f.get("f_ext") or {}).items():
        if not isinstance(k, int) or not 0 <= k < n:
            _err(f"{path}.f_ext", f"node index {k!r} out of range")
        fext[k] = _vec({"v": v}, "v", f"{path}.f_ext[{k}]")
    out = dict(nodes=xs, mass=[float(m) for m in mass], elements=els, stiffness=stiff, fixed=fixed,
               velocity=vel, f_ext=fext)
    if "rest_length" in f:
        out["rest_length"] = [float(r) for r in f["rest_length"]]
    return out


def validate_config(raw, base_dir="."):
    """Normalised copy of ``raw`` with defaults filled; raises InvalidConfigError."""
    if not isinstance(raw, dict):
        raise InvalidConfigError("config: expected a mapping at the top level")
    _check_keys(raw, ("schema_version", "name", "seed", "grid", "materials", "points", "boundary", "frame",
                      "bodies", "contact", "solver", "output", "benchmark"), "config")
    ver = raw.get("schema_version")
    if ver != SCHEMA_VERSION:
        _err("schema_version", f"expected {SCHEMA_VERSION}, got {ver!r}")
    cfg = dict(schema_version=SCHEMA_VERSION, name=str(raw.get("name", "scenario")),
               seed=int(raw.get("seed", 0)), benchmark=raw.get("benchmark"))
    if "grid" not in raw:
        _err("grid", "required field missing")
    cfg["grid"] = _validate_grid(raw["grid"])

    mats = raw.get("materials") or {}
    if not isinstance(mats, dict):
        _err("materials", "expected a mapping of name -> material block")
    cfg["materials"] = {str(k): _validate_material(v, f"materials.{k}") for k, v in mats.items()}

    cfg["points"] = []
    for i, blk in enumerate(raw.get("points") or []):
        p = f"points[{i}]"
        _check_keys(blk, ("material", "lo", "hi", "ppe"), p)
        if blk.get("material") not in cfg["materials"]:
            _err(p + ".material", f"unknown material {blk.get('material')!r}")
        lo, hi = _vec(blk, "lo", p), _vec(blk, "hi", p)
        if any(b <= a for a, b in zip(lo, hi)):
            _err(p + ".hi", "must exceed lo in every direction")
        cfg["points"].append(dict(material=blk["material"], lo=lo, hi=hi,
                                  ppe=int(_num(blk, "ppe", p, lo=1.0, default=2.0))))

    bnd = raw.get("boundary") or {}
    _check_keys(bnd, ("rollers", "planes", "boxes"), "boundary")
    rollers = bnd.get("rollers", [])
    if rollers is True:
        rollers = ["x-", "x+", "y-", "y+", "z-", "z+"]
    for r in rollers:
        if r not in ("x-", "x+", "y-", "y+", "z-", "z+"):
            _err("boundary.rollers", f"unknown face {r!r} (x-, x+, y-, y+, z-, z+)")
    planes = []
    for i, pl in enumerate(bnd.get("planes", [])):
        p = f"boundary.planes[{i}]"
        _check_keys(pl, ("axis", "value", "components"), p)
        if pl.get("axis") not in AXES:
            _err(p + ".axis", "must be x, y or z")
        planes.append(dict(axis=AXES.index(pl["axis"]), value=_num(pl, "value", p),
                           components=_components(pl.get("components", pl["axis"]), p + ".components")))
    boxes = []
    for i, bx in enumerate(bnd.get("boxes", [])):
        p = f"boundary.boxes[{i}]"
        _check_keys(bx, ("lo", "hi", "components"), p)
        boxes.append(dict(lo=_vec(bx, "lo", p), hi=_vec(bx, "hi", p),
                          components=_components(bx.get("components", "xyz"), p + ".components")))
    cfg["boundary"] = dict(rollers=list(rollers), planes=planes, boxes=boxes)

    cfg["frame"] = _validate_frame(raw["frame"]) if raw.get("frame") else None
    bodies = []
    for i, b in enumerate(raw.get("bodies") or []):
        p = f"bodies[{i}]"
        _check_keys(b, ("name", "mesh", "drivers", "mu"), p)
        if cfg["frame"] is None:
            _err(p, "rigid bodies need a frame block")
        mu = _num(b, "mu", p, default=0.0)
        if mu < 0.0:
            _err(p + ".mu", f"friction coefficient must be >= 0, got {mu}")
        dr = b.get("drivers", [0, 1])
        nf = cfg["frame"].get("n_ring", 0) + 1 if cfg["frame"].get("preset") == "ring" else len(cfg["frame"]["nodes"])
        if not isinstance(dr, list) or len(dr) != 2 or any(not isinstance(a, int) or not 0 <= a < nf for a in dr) \
                or dr[0] == dr[1]:
            _err(p + ".drivers", f"expected two distinct frame node indices in [0, {nf})")
        if "mesh" not in b:
            _err(p + ".mesh", "required field missing")
        bodies.append(dict(name=str(b.get("name", f"body{i}")), mesh=_validate_mesh(b["mesh"], p + ".mesh", base_dir),
                           drivers=dr, mu=mu))
    cfg["bodies"] = bodies

    c = dict(CONTACT_DEFAULTS)
    craw = raw.get("contact") or {}
    _check_keys(craw, tuple(CONTACT_DEFAULTS), "contact")
    c["f_N"] = _num(craw, "f_N", "contact", lo=0.0, lo_open=True, default=c["f_N"])
    c["f_T"] = _num(craw, "f_T", "contact", lo=0.0, lo_open=True, default=c["f_T"])
    c["search_margin"] = _num(craw, "search_margin", "contact", lo=0.0, required=False)
    cfg["contact"] = c

    s = copy.deepcopy(SOLVER_DEFAULTS)
    sraw = raw.get("solver") or {}
    _check_keys(sraw, tuple(SOLVER_DEFAULTS), "solver")
    for k in ("dt", "t_end", "tol_rel", "tol_abs"):
        s[k] = _num(sraw, k, "solver", lo=0.0, lo_open=True, default=s[k])
    s["gamma"] = _num(sraw, "gamma", "solver", lo=0.0, lo_open=True, default=s["gamma"])
    s["beta"] = _num(sraw, "beta", "solver", lo=0.0, lo_open=True, default=s["beta"])
    for k in ("max_iter", "max_halvings", "gravity_ramp_steps"):
        s[k] = int(_num(sraw, k, "solver", lo=0.0, default=float(s[k])))
    for k in ("gamma_m_scale", "gamma_k_scale"):
        s[k] = _num(sraw, k, "solver", lo=0.0, default=s[k])
    s["gap_tol"] = _num(sraw, "gap_tol", "solver", lo=0.0, lo_open=True, hi=1.0, default=s["gap_tol"])
    s["max_increment"] = _num(sraw, "max_increment", "solver", lo=0.0, lo_open=True, default=s["max_increment"])
    s["max_backtracks"] = int(_num(sraw, "max_backtracks", "solver", lo=0.0, default=float(s["max_backtracks"])))
    for k in ("quasi_static", "stabilise_mass", "stabilise_stiffness", "gap_correction"):
        if k in sraw and not isinstance(sraw[k], bool):
            _err(f"solver.{k}", "expected true or false")
        s[k] = bool(sraw.get(k, s[k]))
    s["gravity"] = _vec(sraw, "gravity", "solver", default=s["gravity"])
    inj = sraw.get("inject_failures", [])
    if not isinstance(inj, list) or any(not isinstance(a, int) or a < 0 for a in inj):
        _err("solver.inject_failures", "expected a list of non-negative step indices")
    s["inject_failures"] = inj
    cfg["solver"] = s

    o = dict(OUTPUT_DEFAULTS)
    oraw = raw.get("output") or {}
    _check_keys(oraw, tuple(OUTPUT_DEFAULTS), "output")
    o["dir"] = oraw.get("dir")
    o["every"] = int(_num(oraw, "every", "output", lo=1.0, default=1.0))
    for k in ("vtk", "stl", "checkpoint"):
        o[k] = bool(oraw.get(k, o[k]))
    cfg["output"] = o
    return cfg


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise InvalidConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise InvalidConfigError(f"{path}: not valid YAML ({exc})") from exc
    return validate_config(raw, base_dir=path.parent)


def dump_config(cfg, path):
    Path(path).write_text(yaml.safe_dump(cfg, sort_keys=False))
