"""Scenario execution: time loop, result files and benchmark metrics."""
from __future__ import annotations

import logging
import math
import os
import time
from pathlib import Path

import numpy as np

from ..solver import save_checkpoint
from . import analytic
from .builders import build_simulation
from .output import CsvLog, write_body_stl, write_summary, write_vtk_points

log = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "RIGIDMPM_OUTPUT_ROOT"


def output_dir(cfg, override=None):
    if override is not None:
        return Path(override)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "output"))
    d = cfg["output"]["dir"] or cfg["name"]
    d = Path(d)
    return d if d.is_absolute() else root / d


def friction_kkt(cres, tol=1e-10):
    """Worst violations of the Coulomb conditions over the active vertices.

    Returns (max f / (mu |p_N|), max stick excess, max slip mismatch), all
    relative to mu |p_N|; vertices of frictionless bodies are skipped.
    """
    sel = cres.mu > 0.0
    if not np.any(sel):
        return 0.0, 0.0, 0.0
    lim = cres.mu[sel] * np.abs(cres.pN[sel])
    pt = np.linalg.norm(cres.pT[sel], axis=1)
    f = (pt - lim) / lim
    slip = cres.slip[sel]
    stick_excess = float(np.max(f[~slip], initial=-np.inf))
    slip_mismatch = float(np.max(np.abs(f[slip]), initial=0.0))
    return float(np.max(f)), stick_excess, slip_mismatch


def contact_adjacent_points(sim, cres):
    """Points owning at least one active contact vertex."""
    if cres is None or cres.n == 0:
        return np.zeros(0, int)
    return np.unique(cres.vid // 8)


def run_scenario(cfg, out=None, write_files=True, progress=None):
    """Run a validated config; returns the summary dict.

    Files (when ``write_files``): convergence.csv, steps.csv, history.csv,
    contacts.csv, vtk/points_NNNNN.vtk, stl/<body>_NNNNN.stl, summary.json and,
    with ``output.checkpoint``, final_state.npz.
    """
    odir = output_dir(cfg, out)
    if write_files:
        odir.mkdir(parents=True, exist_ok=True)
    sim = build_simulation(cfg, dump_dir=odir)
    bench = cfg.get("benchmark") or {}
    btype = bench.get("type") if isinstance(bench, dict) else None
    every = cfg["output"]["every"]
    mass0 = sim.total_mass()
    logs = {}
    if write_files:
        (odir / "vtk").mkdir(exist_ok=True)
        if sim.bodies and cfg["output"]["stl"]:
            (odir / "stl").mkdir(exist_ok=True)
        logs["conv"] = CsvLog(odir / "convergence.csv", ["step", "time", "dt", "halvings", "iteration", "residual"])
        logs["steps"] = CsvLog(odir / "steps.csv", ["step", "time", "dt", "halvings", "iterations"])
        hdr = ["step", "time"]
        for b in sim.bodies:
            for k in ("xM", "yM", "zM", "xD", "yD", "zD"):
                hdr.append(f"{b.name}_{k}")
            hdr += [f"{b.name}_Fx", f"{b.name}_Fy", f"{b.name}_Fz"]
        hdr += ["n_contacts", "max_penetration"]
        logs["hist"] = CsvLog(odir / "history.csv", hdr)
        logs["contacts"] = CsvLog(odir / "contacts.csv", ["step", "vertex", "body", "triangle", "gap", "pN",
                                                          "pT_norm", "slip"])

    state = dict(kkt=[0.0, -np.inf, 0.0], penetration=0.0, force_history=[], energy=[], times=[],
                 driver=[], mass_error=0.0)
    osc = bench.get("oscillator") if btype == "oscillator" else None

    def record(sim, rec):
        cres = sim.last_contact
        pen = float(max(0.0, -np.min(cres.gap))) if cres is not None and cres.n else 0.0
        state["penetration"] = max(state["penetration"], pen)
        forces = cres.body_force if cres is not None and cres.body_force is not None \
            else np.zeros((len(sim.bodies), 3))
        state["force_history"].append(np.array(forces))
        state["times"].append(sim.time)
        if sim.frame is not None:
            state["driver"].append(sim.frame.x.copy() if sim.frame.n_nodes <= 4 else sim.frame.x[:2].copy())
        if cres is not None and cres.n:
            k = friction_kkt(cres)
            state["kkt"] = [max(state["kkt"][0], k[0]), max(state["kkt"][1], k[1]), max(state["kkt"][2], k[2])]
        state["mass_error"] = max(state["mass_error"], abs(sim.total_mass() - mass0) / max(mass0, 1e-300))
        if osc is not None:
            node, k_spring = osc["node"], osc["k"]
            x = sim.frame.x[node] - np.asarray(osc["x0"])
            state["energy"].append(analytic.oscillator_energy(sim.frame.mass[node], k_spring, x[osc["axis"]],
                                                              sim.frame.v[node, osc["axis"]]))
        if write_files:
            for i, r in enumerate(rec.residuals):
                logs["conv"].write([rec.index, sim.time, rec.dt, rec.halvings, i, r])
            logs["steps"].write([rec.index, sim.time, rec.dt, rec.halvings, rec.iterations])
            row = [rec.index, sim.time]
            for b_i, b in enumerate(sim.bodies):
                row += list(sim.frame.x[b.driver_nodes[0]]) + list(sim.frame.x[b.driver_nodes[1]])
                row += list(forces[b_i])
            row += [0 if cres is None else cres.n, pen]
            logs["hist"].write(row)
            if rec.index % every == 0 or sim.time >= sim.settings.t_end - 1e-12:
                tag = f"{rec.index:05d}"
                if cfg["output"]["vtk"] and len(sim.points):
                    write_vtk_points(odir / "vtk" / f"points_{tag}.vtk", sim.points)
                if cfg["output"]["stl"]:
                    for b in sim.bodies:
                        write_body_stl(odir / "stl" / f"{b.name}_{tag}.stl", b,
                                       sim.frame.x[b.driver_nodes[0]], sim.frame.x[b.driver_nodes[1]])
                if cres is not None:
                    for c in range(cres.n):
                        logs["contacts"].write([rec.index, int(cres.vid[c]), int(cres.body[c]), int(cres.tri[c]),
                                                float(cres.gap[c]), float(cres.pN[c]),
                                                float(np.linalg.norm(cres.pT[c])), bool(cres.slip[c])])
        if progress is not None:
            progress(sim, rec)

    t0 = time.perf_counter()
    if write_files and cfg["output"]["vtk"] and len(sim.points):
        write_vtk_points(odir / "vtk" / "points_initial.vtk", sim.points)
    try:
        sim.run(record)
    finally:
        for lg in logs.values():
            lg.close()
    wall = time.perf_counter() - t0

    summary = dict(name=cfg["name"], steps=sim.step_index, time=sim.time,
                   halvings=int(sum(r.halvings for r in sim.records)),
                   max_halving_depth=int(max((r.halvings for r in sim.records), default=0)),
                   newton_iterations=int(sum(r.iterations for r in sim.records)),
                   mass_error=state["mass_error"], max_penetration=state["penetration"],
                   friction_kkt=dict(max_f=state["kkt"][0], max_stick_excess=state["kkt"][1],
                                     max_slip_mismatch=state["kkt"][2]))
    summary.update(_benchmark_metrics(sim, bench, state))
    if write_files:
        if cfg["output"]["checkpoint"]:
            save_checkpoint(sim, odir / "final_state.npz")
        write_summary(odir / "summary.json", summary)
    summary["wall_time"] = wall
    summary["_sim"] = sim
    summary["_state"] = state
    return summary


def _benchmark_metrics(sim, bench, state):
    btype = bench.get("type") if isinstance(bench, dict) else None
    out = {}
    if btype == "cube":
        E = bench["E"]
        l0 = bench["l0"]
        b = sim.bodies[0]
        xM, xD = sim.frame.x[b.driver_nodes[0]], sim.frame.x[b.driver_nodes[1]]
        face = float(b.node_positions(xM, xD)[:, 2].min())
        l = face - bench["base_z"]
        sig = analytic.analytic_cube_stress(E, l, l0)
        szz = sim.points.sigma[:, 2, 2]
        adj = contact_adjacent_points(sim, sim.last_contact)
        rel = np.abs(szz[adj] - sig) / abs(sig) if len(adj) else np.array([np.inf])
        out["cube"] = dict(l=l, sigma_analytic=sig, l2_error=analytic.l2_stress_error(szz, sig, sim.points.vol0),
                           contact_points=len(adj), max_rel_error_contact=float(np.max(rel)),
                           sigma_contact=szz[adj].tolist())
    elif btype == "sphere":
        x0 = np.asarray(bench["center"])
        d = float(sim.frame.x[0, 0] - x0[0])
        theta = math.radians(bench.get("slope_deg", 45.0))
        mu = sim.bodies[0].mu
        ref = analytic.analytic_sphere_position(sim.time, mu, theta, bench.get("g", 9.81))
        out["sphere"] = dict(d_x=d, analytic=ref, rel_error=abs(d - ref) / ref,
                             branch="stick" if analytic.sphere_sticks(mu, theta) else "slip",
                             vertical_excursion=float(np.max(np.abs(np.array(state["driver"])[:, 0, 2] - x0[2]))))
    elif btype == "cpt":
        fz = np.array([f[0][2] for f in state["force_history"]])
        depth = np.array([sim.frame.velocity[0, 2] * -1.0 * t for t in state["times"]])
        half = depth >= 0.5 * depth[-1] - 1e-12
        tail = fz[half]
        out["cpt"] = dict(depth=depth.tolist(), tip_force=fz.tolist(),
                          min_tip_force_tail=float(tail.min()) if len(tail) else 0.0,
                          non_decreasing_tail=bool(np.all(np.diff(tail) >= -1e-9 * max(1.0, np.abs(tail).max())))
                          if len(tail) else True)
    elif btype == "oscillator":
        e = np.array(state["energy"])
        e0 = bench["oscillator"]["E0"]
        out["oscillator"] = dict(E0=e0, max_drift=float(np.max(np.abs(e - e0)) / e0) if len(e) else 0.0)
    return out
