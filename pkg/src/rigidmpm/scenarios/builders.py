"""Construct solver objects from a validated scenario config."""
from __future__ import annotations

import numpy as np

from ..errors import InvalidConfigError
from ..grid import BackgroundGrid, GridAxis, build_graded_axis, uniform_axis
from ..materials import DruckerPrager, HenckyElastic, depth_stiffness, geostatic_be
from ..meshes import box_mesh, cone_mesh, icosphere, latlong_sphere, read_mesh, validate_mesh
from ..points import MaterialPoints, fill_box
from ..rigid import RigidBody, TrussFrame, ring_frame
from ..solver import DirichletBC, Simulation, SolverSettings


def build_axis(spec):
    if "graded" in spec:
        g = spec["graded"]
        ax = build_graded_axis(g["dx0"], g["uniform"], g["total"], g["exponent"], 0.0)
        c = ax.coords
        if g["reverse"]:
            # fine spacing at the top end: mirror about the origin
            c = g["origin"] - c[::-1]
        else:
            c = g["origin"] + c
        return GridAxis(c)
    return uniform_axis(spec["lo"], spec["hi"], spec["dx"])


def build_grid(cfg):
    return BackgroundGrid(tuple(build_axis(cfg["grid"][a]) for a in ("x", "y", "z")))


def build_materials(cfg):
    """(models by integer id, names in id order)."""
    names = list(cfg["materials"])
    models = {}
    for i, n in enumerate(names):
        m = cfg["materials"][n]
        if m["model"] == "hencky":
            models[i] = HenckyElastic(m["E"], m["nu"], m["rho"])
        else:
            models[i] = DruckerPrager(m["E"], m["nu"], m["rho"], m["phi"], m["psi"], m["c"])
    return models, names


def build_points(cfg, grid):
    names = list(cfg["materials"])
    pts = None
    for blk in cfg["points"]:
        mid = names.index(blk["material"])
        m = cfg["materials"][blk["material"]]
        p = fill_box(grid, blk["lo"], blk["hi"], blk["ppe"], m["rho"], mid, m["E"])
        depth = None
        if m["depth_stiffness"] or m["geostatic"]:
            depth = np.maximum(m["surface_z"] - p.x[:, 2], 0.0)
        if m["depth_stiffness"]:
            p.E = depth_stiffness(depth, m["unit_weight"], m["E_ref"], m["m_E"], m["K0"], m["p_ref"], m["c"])
        if m["geostatic"]:
            be, tau = geostatic_be(depth, m["unit_weight"], m["K0"], p.E, m["nu"])
            p.be = be
            p.sigma = tau.copy()
        if pts is None:
            pts = p
        else:
            pts.append(p)
    if pts is None:
        pts = MaterialPoints(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0))
    return pts


def build_bcs(cfg, grid):
    b = cfg["boundary"]
    out = []
    for face in b["rollers"]:
        d = "xyz".index(face[0])
        val = grid.lo[d] if face[1] == "-" else grid.hi[d]
        out.append(DirichletBC("plane", (d,), axis=d, value=float(val)))
    for pl in b["planes"]:
        out.append(DirichletBC("plane", tuple(pl["components"]), axis=pl["axis"], value=pl["value"]))
    for bx in b["boxes"]:
        out.append(DirichletBC("box", tuple(bx["components"]), lo=tuple(bx["lo"]), hi=tuple(bx["hi"])))
    return out


def build_frame(cfg):
    f = cfg["frame"]
    if f is None:
        return None
    if f.get("preset") == "ring":
        return ring_frame(f["center"], f["ring_radius"], f["mass"], f["n_ring"], f["stiffness"], f["constrain_y"])
    n = len(f["nodes"])
    fixed = np.zeros((n, 3), bool)
    for k, comps in f["fixed"].items():
        fixed[k, comps] = True
    vel = np.zeros((n, 3))
    for k, v in f["velocity"].items():
        vel[k] = v
        fixed[k] = True
    fext = np.zeros((n, 3))
    for k, v in f["f_ext"].items():
        fext[k] = v
    return TrussFrame(np.array(f["nodes"]), np.array(f["mass"]), np.array(f["elements"], dtype=int).reshape(-1, 2),
                      f["stiffness"], fixed=fixed, f_ext=fext, velocity=vel, rest_length=f.get("rest_length"))


def build_mesh(spec):
    if "file" in spec:
        mesh = read_mesh(spec["file"])
        if "scale" in spec:
            mesh = mesh.scaled(spec["scale"])
        if "translate" in spec:
            mesh = mesh.translated(spec["translate"])
    elif spec["generator"] == "box":
        mesh = box_mesh(spec["lo"], spec["hi"])
    elif spec["generator"] == "icosphere":
        mesh = icosphere(spec["radius"], spec["subdivisions"], spec["center"])
    elif spec["generator"] == "latlong_sphere":
        mesh = latlong_sphere(spec["radius"], spec["n_lat"], spec["n_lon"], spec["center"], spec["axis"],
                              spec["phase"])
    else:
        mesh = cone_mesh(spec["radius"], spec["apex_angle"], spec["shaft_length"], spec["n_seg"], spec["tip"],
                         spec["phase"])
    validate_mesh(mesh)
    return mesh


def build_bodies(cfg, frame):
    bodies = []
    for b in cfg["bodies"]:
        body = RigidBody(build_mesh(b["mesh"]), tuple(b["drivers"]), b["mu"], b["name"])
        xM, xD = frame.x[body.driver_nodes[0]], frame.x[body.driver_nodes[1]]
        if np.allclose(xM, xD):
            raise InvalidConfigError(f"bodies.{b['name']}: driver nodes coincide")
        body.calibrate(xM, xD)
        bodies.append(body)
    return bodies


def build_settings(cfg, dump_dir="."):
    s = cfg["solver"]
    return SolverSettings(dt=s["dt"], t_end=s["t_end"], gamma=s["gamma"], beta=s["beta"], tol_rel=s["tol_rel"],
                          tol_abs=s["tol_abs"], max_iter=s["max_iter"], max_halvings=s["max_halvings"],
                          quasi_static=s["quasi_static"], gravity=tuple(s["gravity"]),
                          gravity_ramp_steps=s["gravity_ramp_steps"], stabilise_mass=s["stabilise_mass"],
                          stabilise_stiffness=s["stabilise_stiffness"], gamma_m_scale=s["gamma_m_scale"],
                          gamma_k_scale=s["gamma_k_scale"], gap_correction=s["gap_correction"], gap_tol=s["gap_tol"],
                          max_increment=s["max_increment"], max_backtracks=s["max_backtracks"],
                          inject_failures=tuple(s["inject_failures"]), dump_dir=str(dump_dir))


def build_simulation(cfg, dump_dir="."):
    grid = build_grid(cfg)
    models, _ = build_materials(cfg)
    pts = build_points(cfg, grid)
    frame = build_frame(cfg)
    bodies = build_bodies(cfg, frame) if cfg["bodies"] else []
    c = cfg["contact"]
    sim = Simulation(grid, pts, models, build_settings(cfg, dump_dir), build_bcs(cfg, grid), frame, bodies,
                     c["f_N"], c["f_T"])
    if sim.contact is not None:
        sim.contact.search_margin = c["search_margin"]
    return sim
