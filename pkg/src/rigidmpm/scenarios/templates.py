"""Desk-scale benchmark configurations (raw, schema version 1)."""
from __future__ import annotations

import math

import numpy as np

from ..meshes import latlong_sphere
from .config import SAND_TABLE, SCHEMA_VERSION


def cube_config(p_f=100.0, E=1e3, dx=0.1, ppe=2, steps=5, travel=0.2001, standoff=1e-3):
    """Unit-height column compressed by a rigid plate under rollers (nu = 0).

    One element wide in x and y; the plate starts ``standoff`` above the top
    and moves down ``travel`` over ``steps`` pseudo-static increments.
    """
    top = 1.0
    dt = 1.0 / steps
    z0 = top + standoff
    return dict(
        schema_version=SCHEMA_VERSION, name=f"cube_pf{p_f:g}",
        benchmark=dict(type="cube", E=E, l0=top, base_z=0.0),
        grid=dict(x=dict(lo=0.0, hi=dx, dx=dx), y=dict(lo=0.0, hi=dx, dx=dx),
                  z=dict(lo=0.0, hi=top + 2 * dx, dx=dx)),
        materials=dict(column=dict(model="hencky", E=E, nu=0.0, rho=1.0)),
        points=[dict(material="column", lo=[0.0, 0.0, 0.0], hi=[dx, dx, top], ppe=ppe)],
        boundary=dict(rollers=["x-", "x+", "y-", "y+", "z-"]),
        frame=dict(nodes=[[-1.0, 0.5 * dx, z0 + 0.2], [1.0, 0.5 * dx, z0 + 0.2]], mass=0.0,
                   elements=[[0, 1]], stiffness=1e9,
                   velocity={0: [0.0, 0.0, -travel], 1: [0.0, 0.0, -travel]}),
        bodies=[dict(name="plate", mesh=dict(generator="box", lo=[-0.5, -0.5, z0], hi=[0.5 + dx, 0.5 + dx, z0 + 0.4]),
                     drivers=[0, 1], mu=0.0)],
        contact=dict(f_N=float(p_f), f_T=25.0),
        solver=dict(dt=dt, t_end=1.0, quasi_static=True),
        output=dict(every=1),
    )


def sphere_geometry(radius=0.5, n_lon=40, n_lat=5):
    """Depth of the lowest facet below the centre of the rolling-sphere mesh."""
    m = latlong_sphere(radius, n_lat, n_lon, (0.0, 0.0, 0.0), axis="y", phase=0.5)
    return float(-m.vertices[:, 2].min())


def sphere_config(mu=0.0, t_end=1.0, dt=0.01, radius=0.5, n_lon=40, n_lat=5, mass=1000.0, runway=5.0,
                  slab_dx=0.1, slab_ppe=2, solid=False, gamma=0.5, beta=0.25):
    """Body rolling down a 45 degree slope (gravity tilted, slab horizontal).

    The slab is a thin layer of points whose grid nodes are all fixed.  The
    truss frame is a massless hub plus a ring of 100 masses; the ring radius
    sets the rotational inertia: r/sqrt(2) gives m r^2 / 2 (the body the
    closed-form stick law assumes), sqrt(2/5) r a solid sphere.
    """
    H = slab_dx
    width = slab_dx
    y0 = 0.5 * width
    lo_x = -1.0
    drop = sphere_geometry(radius, n_lon, n_lat)
    center = [0.0, y0, H + drop]
    ring_r = radius * (math.sqrt(0.4) if solid else 1.0 / math.sqrt(2.0))
    g = 9.81
    return dict(
        schema_version=SCHEMA_VERSION, name=f"sphere_mu{mu:g}",
        benchmark=dict(type="sphere", center=center, slope_deg=45.0, g=g, solid=solid),
        grid=dict(x=dict(lo=lo_x, hi=lo_x + runway, dx=slab_dx), y=dict(lo=0.0, hi=width, dx=slab_dx),
                  z=dict(lo=0.0, hi=H + 2 * slab_dx, dx=slab_dx)),
        materials=dict(slab=dict(model="hencky", E=1e5, nu=0.3, rho=1000.0)),
        points=[dict(material="slab", lo=[lo_x, 0.0, 0.0], hi=[lo_x + runway, width, H], ppe=slab_ppe)],
        boundary=dict(boxes=[dict(lo=[lo_x - 1, -1.0, -1.0], hi=[lo_x + runway + 1, width + 1, H + 1e-6],
                                  components="xyz")]),
        frame=dict(preset="ring", center=center, ring_radius=ring_r, mass=mass, n_ring=100, stiffness=1e9),
        bodies=[dict(name="sphere", mesh=dict(generator="latlong_sphere", radius=radius, n_lat=n_lat, n_lon=n_lon,
                                              center=center, axis="y", phase=0.5),
                     drivers=[0, 1], mu=float(mu))],
        contact=dict(f_N=50.0, f_T=25.0),
        solver=dict(dt=dt, t_end=t_end, gamma=gamma, beta=beta, gravity=[g / math.sqrt(2.0), 0.0, -g / math.sqrt(2.0)]),
        output=dict(every=10),
    )


def cpt_config(density="38%", depth=0.2, steps=20, dx=0.1, half_width=0.5, height=1.0, cone_radius=0.15,
               ppe=3, inject_failures=(3, 11)):
    """Quarter model of a cone pushed into a Drucker-Prager box.

    Symmetry rollers on x = 0 and y = 0, rollers on the far sides and a fixed
    base.  Soil stiffness follows depth and the points start from geostatic
    stress.  ``inject_failures`` lists steps whose first attempt is forced to
    diverge so the step-halving path is exercised.
    """
    s = SAND_TABLE[density]
    top = height
    tip = [0.0, 0.0, top + 0.02]
    travel = depth + 0.02
    return dict(
        schema_version=SCHEMA_VERSION, name=f"cpt_{density.rstrip('%')}",
        benchmark=dict(type="cpt", depth=depth),
        grid=dict(x=dict(lo=0.0, hi=half_width, dx=dx), y=dict(lo=0.0, hi=half_width, dx=dx),
                  z=dict(lo=0.0, hi=top + 3 * dx, dx=dx)),
        materials=dict(sand=dict(model="drucker_prager", density=density, depth_stiffness=True, geostatic=True,
                                 surface_z=top)),
        points=[dict(material="sand", lo=[0.0, 0.0, 0.0], hi=[half_width, half_width, top], ppe=ppe)],
        boundary=dict(rollers=["x-", "x+", "y-", "y+", "z-"]),
        frame=dict(nodes=[tip, [tip[0] + 1.0, tip[1], tip[2]]], mass=0.0, elements=[[0, 1]], stiffness=1e9,
                   velocity={0: [0.0, 0.0, -travel], 1: [0.0, 0.0, -travel]}),
        bodies=[dict(name="cone", mesh=dict(generator="cone", radius=cone_radius, apex_angle=60.0,
                                            shaft_length=0.6, n_seg=24, tip=tip, phase=0.5),
                     drivers=[0, 1], mu=0.0)],
        contact=dict(f_N=50.0, f_T=25.0),
        solver=dict(dt=1.0 / steps, t_end=1.0, quasi_static=True, gravity=[0.0, 0.0, -9.81],
                    inject_failures=list(inject_failures)),
        output=dict(every=5),
    )


def oscillator_config(mass=1.0, k=100.0, amplitude=0.01, steps=1000, periods=10.0):
    """Point mass on an axial spring (no material points)."""
    omega = math.sqrt(k / mass)
    T = 2.0 * math.pi / omega
    dt = periods * T / steps
    L = 1.0
    return dict(
        schema_version=SCHEMA_VERSION, name="oscillator",
        benchmark=dict(type="oscillator", oscillator=dict(node=1, k=k, x0=[L, 0.0, 0.0], axis=0,
                                                          E0=0.5 * k * amplitude ** 2)),
        grid=dict(x=dict(lo=0.0, hi=1.0, dx=1.0), y=dict(lo=0.0, hi=1.0, dx=1.0), z=dict(lo=0.0, hi=1.0, dx=1.0)),
        frame=dict(nodes=[[0.0, 0.0, 0.0], [L + amplitude, 0.0, 0.0]], mass=[0.0, mass], elements=[[0, 1]],
                   stiffness=k, rest_length=[L], fixed={0: "xyz", 1: "yz"}),
        solver=dict(dt=dt, t_end=steps * dt),
        output=dict(every=100, vtk=False),
    )


TEMPLATES = dict(cube=cube_config, sphere=sphere_config, cpt=cpt_config, oscillator=oscillator_config)


def template(name, **kw):
    if name not in TEMPLATES:
        raise KeyError(f"unknown template {name!r} ({' | '.join(TEMPLATES)})")
    return TEMPLATES[name](**kw)


def yaml_safe(obj):
    """Plain Python types for YAML dumping."""
    if isinstance(obj, dict):
        return {k: yaml_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [yaml_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
