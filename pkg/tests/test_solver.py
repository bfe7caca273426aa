import numpy as np
import pytest

from rigidmpm import points as pts
from rigidmpm.errors import InvalidConfigError, SimulationAbort
from rigidmpm.grid import BackgroundGrid, uniform_axis
from rigidmpm.materials import HenckyElastic
from rigidmpm.rigid import TrussFrame
from rigidmpm.scenarios import template, validate_config
from rigidmpm.scenarios.builders import build_simulation
from rigidmpm.solver import (DirichletBC, NewmarkParams, Simulation, SolverSettings, load_checkpoint,
                             newmark_kinematics, save_checkpoint)


def no_points():
    return pts.MaterialPoints(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0))


def unit_cell():
    ax = uniform_axis(0.0, 1.0, 1.0)
    return BackgroundGrid((ax, ax, ax))


def block_sim(n=2, ppe=2, gravity=(0.0, 0.0, 0.0), quasi_static=False, fixed_base=True, dt=0.05, **kw):
    ax = uniform_axis(0.0, 1.0 * n, 1.0)
    g = BackgroundGrid((ax, ax, uniform_axis(0.0, n + 1.0, 1.0)))
    P = pts.fill_box(g, [0, 0, 0], [n, n, n], ppe, 1000.0, 0, 1e5)
    bcs = [DirichletBC("plane", (0, 1, 2), axis=2, value=0.0)] if fixed_base else []
    s = SolverSettings(dt=dt, t_end=10 * dt, gravity=tuple(gravity), quasi_static=quasi_static, **kw)
    return Simulation(g, P, {0: HenckyElastic(1e5, 0.3, 1000.0)}, s, bcs)


def test_newmark_constant_acceleration():
    dt, a = 0.1, -9.81
    u = 0.5 * a * dt ** 2
    v, acc = newmark_kinematics(u, 0.0, a, 0.5, 0.25, dt)
    assert np.isclose(u, -0.04905)
    assert np.isclose(v, -0.981) and np.isclose(acc, -9.81)


def test_newmark_average_acceleration_form():
    rng = np.random.default_rng(3)
    u, v0, a0 = rng.standard_normal((3, 5))
    dt = 0.02
    v, a = newmark_kinematics(u, v0, a0, 0.5, 0.25, dt)
    assert np.allclose(a, 4 * u / dt ** 2 - 4 * v0 / dt - a0)
    assert np.allclose(v, 2 * u / dt - v0)


def test_newmark_parameters_validated():
    with pytest.raises(InvalidConfigError):
        NewmarkParams(beta=0.0)
    with pytest.raises(InvalidConfigError):
        NewmarkParams(dt=-1.0)


def test_gravity_residual_is_unbalanced_weight():
    g = unit_cell()
    P = pts.MaterialPoints([[0.5, 0.5, 0.5]], [[0.25, 0.25, 0.25]], [2.0], [0.125], E=1e3)
    s = SolverSettings(dt=0.1, quasi_static=True, gravity=(0.0, 0.0, -9.81))
    sim = Simulation(g, P, {0: HenckyElastic(1e3, 0.0, 16.0)}, s, [DirichletBC("plane", (0, 1, 2), axis=2, value=0.0)])
    c = sim.prepare_step(0.1)
    a = sim.assemble_system(c, np.zeros((c.na, 3)), np.zeros((0, 3)))
    Rz = a.R.reshape(-1, 3)[:, 2]
    free = ~c.fixed.reshape(-1, 3)[:, 2]
    assert np.isclose(Rz[free].sum(), 0.5 * 2.0 * 9.81)
    assert np.allclose(a.R.reshape(-1, 3)[:, :2], 0.0)


def test_unloaded_body_at_rest_has_zero_residual():
    sim = block_sim()
    c = sim.prepare_step(0.05)
    a = sim.assemble_system(c, np.zeros((c.na, 3)), np.zeros((0, 3)))
    assert np.abs(a.R).max() == 0.0
    rec = sim.run_timestep()
    assert rec.iterations == 0
    assert np.abs(sim.points.x - pts.fill_box(sim.grid, [0, 0, 0], [2, 2, 2], 2, 1.0).x).max() == 0.0


def test_free_fall_of_a_frame_mass():
    frame = TrussFrame([[0.2, 0.5, 0.5], [0.8, 0.5, 0.5]], [1.0, 1.0], [[0, 1]], 1e3)
    s = SolverSettings(dt=0.1, t_end=0.1, gravity=(0.0, 0.0, -9.81))
    sim = Simulation(unit_cell(), no_points(), {}, s, frame=frame)
    sim.run()
    assert np.allclose(sim.frame.x[:, 2] - 0.5, -0.04905, atol=1e-12)
    assert np.allclose(sim.frame.v[:, 2], -0.981)


def test_small_load_converges_in_two_iterations():
    sim = block_sim(gravity=(0.0, 0.0, -1e-6), quasi_static=True)
    rec = sim.run_timestep()
    assert 1 <= rec.iterations <= 2


def test_injected_failure_halves_then_restores_increment():
    sim = block_sim(gravity=(0.0, 0.0, -9.81), inject_failures=(1,))
    recs = [sim.run_timestep() for _ in range(3)]
    assert [r.halvings for r in recs] == [0, 1, 0]
    assert np.allclose([r.dt for r in recs], [0.05, 0.025, 0.05])
    assert np.isclose(sim.time, 0.125)


def test_exhausted_halvings_abort_with_state_dump(tmp_path):
    sim = block_sim(gravity=(0.0, 0.0, -9.81), inject_failures=(0,), max_halvings=0, dump_dir=str(tmp_path))
    with pytest.raises(SimulationAbort) as exc:
        sim.run_timestep()
    assert exc.value.dump_path and (tmp_path / "abort_step0.npz").exists()


def _contact_system(mu=0.3, gx=0.3):
    raw = template("cube", dx=0.5, standoff=-0.01)
    raw["frame"].update(velocity={}, mass=1.0, stiffness=1e3)
    raw["solver"].update(quasi_static=False, dt=0.01, gravity=[gx, 0.0, -9.81])
    raw["bodies"][0]["mu"] = mu
    return build_simulation(validate_config(raw), dump_dir=".")


@pytest.mark.parametrize("mu,gx,scale,slipping", [(0.3, 0.3, 1e-4, False), (0.02, 30.0, 1e-3, True),
                                                  (0.0, 0.0, 1e-4, False)])
def test_global_tangent_matches_finite_differences(mu, gx, scale, slipping):
    sim = _contact_system(mu, gx)
    c = sim.prepare_step(0.01)
    rng = np.random.default_rng(11)
    u = scale * rng.standard_normal((c.na, 3))
    u.reshape(-1)[c.fixed[:3 * c.na]] = 0.0
    w = c.w0 + scale * rng.standard_normal((c.nf, 3))
    a = sim.assemble_system(c, u, w)
    assert a.cres.n > 0
    assert bool(np.any(a.cres.slip[a.cres.mu > 0])) == slipping
    K = a.K.toarray()
    h = 1e-7
    for j in c.free:
        d = np.zeros(c.N)
        d[j] = h
        du, dw = d[:3 * c.na].reshape(-1, 3), d[3 * c.na:].reshape(-1, 3)
        Rp = sim.assemble_system(c, u + du, w + dw, tangent=False).R
        Rm = sim.assemble_system(c, u - du, w - dw, tangent=False).R
        fd = (Rp - Rm)[c.free] / (2 * h)
        assert np.abs(fd - K[c.free, j]).max() <= 1e-6 * np.abs(K[c.free, j]).max()


def test_free_body_conserves_momentum_and_mass():
    sim = block_sim(fixed_base=False, dt=0.02)
    P = sim.points
    c = P.x.mean(axis=0)
    P.v[:] = [0.1, -0.05, 0.02] + 0.05 * np.cross([0.0, 0.0, 1.0], P.x - c)
    p0 = (P.mass[:, None] * P.v).sum(axis=0)
    m0 = P.mass.sum()
    for _ in range(5):
        sim.run_timestep()
    p1 = (P.mass[:, None] * P.v).sum(axis=0)
    assert np.abs(p1 - p0).max() <= 1e-10 * np.abs(p0).max()
    assert abs(P.mass.sum() - m0) <= 1e-12 * m0


def test_runs_are_deterministic():
    out = []
    for _ in range(2):
        sim = block_sim(gravity=(0.0, 0.0, -9.81))
        for _ in range(2):
            sim.run_timestep()
        out.append(sim.points.x.copy())
    assert np.array_equal(out[0], out[1])


def test_checkpoint_round_trip(tmp_path):
    sim = _contact_system()
    sim.run_timestep()
    save_checkpoint(sim, tmp_path / "c.npz")
    other = _contact_system()
    load_checkpoint(other, tmp_path / "c.npz")
    for k, v in sim.points.state_arrays().items():
        assert np.array_equal(v, getattr(other.points, k))
    assert np.array_equal(sim.frame.x, other.frame.x)
    assert set(sim.contact.history) == set(other.contact.history)
    sim.run_timestep()
    other.run_timestep()
    assert np.array_equal(sim.points.x, other.points.x)
    assert np.array_equal(sim.frame.x, other.frame.x)
