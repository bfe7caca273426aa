"""Analytic first and second variations against central finite differences."""
import numpy as np
import pytest

from rigidmpm.contact import ContactModel, _History
from rigidmpm.grid import BackgroundGrid, uniform_axis
from rigidmpm.meshes import TriMesh
from rigidmpm.rigid import RigidBody, surface_variations, tangent_variations

N_STATES = 120
H = 1e-6


def central(f, q, h=H):
    q = np.asarray(q, dtype=float)
    cols = []
    for k in range(q.size):
        e = np.zeros(q.size)
        e[k] = h
        cols.append((np.asarray(f(q + e)) - np.asarray(f(q - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def rel(a, b):
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))


def random_drivers(rng):
    xM = rng.uniform(-1, 1, 3)
    d = rng.standard_normal(3)
    d[1] = 0.0
    d *= rng.uniform(0.3, 2.0) / np.linalg.norm(d)
    return xM, xM + d


def test_frame_tangent_variations():
    rng = np.random.default_rng(0)
    e1 = e2 = 0.0
    for _ in range(N_STATES):
        v = rng.standard_normal(3) * rng.uniform(0.2, 3.0)
        t, dt, Ht = tangent_variations(np.zeros(3), v)
        e1 = max(e1, rel(central(lambda y: tangent_variations(np.zeros(3), y)[0], v), dt))
        e2 = max(e2, rel(central(lambda y: tangent_variations(np.zeros(3), y)[1], v), Ht))
    assert e1 < 1e-6
    assert e2 < 1e-5


def random_body(rng):
    V = rng.uniform(-1, 1, (6, 3))
    tris = np.array([[0, 1, 2], [2, 3, 4], [1, 4, 5]])
    xM, xD = random_drivers(rng)
    b = RigidBody(TriMesh(V, tris), (0, 1))
    b.calibrate(xM, xD)
    return b, np.concatenate([xM, xD])


# out-of-plane driver motion is excluded: bodies move in the x-z plane
IN_PLANE = np.array([0, 2, 3, 5])


def test_node_jacobians():
    rng = np.random.default_rng(1)
    e1 = e2 = 0.0
    for _ in range(N_STATES):
        b, th = random_body(rng)
        th = th + 0.1 * rng.standard_normal(6) * [1, 0, 1, 1, 0, 1]
        cols = IN_PLANE
        G, HG = b.node_jacobians(th[:3], th[3:])

        def pos(q):
            full = th.copy()
            full[cols] = q
            return b.node_positions(full[:3], full[3:])

        def jac(q):
            full = th.copy()
            full[cols] = q
            return b.node_jacobians(full[:3], full[3:])[0][:, :, cols]

        e1 = max(e1, rel(central(pos, th[cols]), G[:, :, cols]))
        e2 = max(e2, rel(central(jac, th[cols]), HG[:, :, cols][:, :, :, cols]))
    assert e1 < 1e-6
    assert e2 < 1e-5


def test_surface_point_and_tangent_variations():
    rng = np.random.default_rng(2)
    e1 = e2 = 0.0
    for _ in range(N_STATES):
        b, th = random_body(rng)
        cols = IN_PLANE
        tri = int(rng.integers(0, 3))
        xi = rng.dirichlet(np.ones(3))[:2]
        Dxp, Dt, Hxp, Ht = surface_variations(b, tri, xi, th[:3], th[3:])

        def geo(q, k):
            full = th.copy()
            full[cols] = q
            r = surface_variations(b, tri, xi, full[:3], full[3:])
            return r[k][..., cols]

        def point(q):
            full = th.copy()
            full[cols] = q
            X = b.triangle_vertices(full[:3], full[3:])[tri]
            N = np.array([1 - xi.sum(), xi[0], xi[1]])
            return np.concatenate([N @ X, X[1] - X[0], X[2] - X[0]])

        first = np.concatenate([Dxp[:, cols], Dt[0][:, cols], Dt[1][:, cols]])
        e1 = max(e1, rel(central(point, th[cols]), first))
        e2 = max(e2, rel(central(lambda q: geo(q, 0), th[cols]), Hxp[:, cols][:, :, cols]))
        e2 = max(e2, rel(central(lambda q: geo(q, 1), th[cols]), Ht[..., cols, :][..., cols]))
    assert e1 < 1e-6
    assert e2 < 1e-5


GRID = BackgroundGrid((uniform_axis(0, 1, 1),) * 3)
# local unknowns: 8 grid nodes x 3, then x_M, x_D; y of the drivers stays fixed
LOCAL = np.setdiff1d(np.arange(30), [25, 28])


def contact_state(rng, mu, history):
    ang = rng.uniform(-0.4, 0.4)
    c = np.array([0.5, 0.5, 0.0])
    Ry = np.array([[np.cos(ang), 0, np.sin(ang)], [0, 1, 0], [-np.sin(ang), 0, np.cos(ang)]])
    V = (np.array([[-1, -1, 0], [2, -1, 0.0], [2, 2, 0], [-1, 2, 0]]) - c) @ Ry.T + c + [0, 0, 0.62]
    b = RigidBody(TriMesh(V, [[0, 1, 2], [0, 2, 3]]), (0, 1), mu=mu)
    fx = np.array([[0.3, 0.4, 0.9], [0.8, 0.4, 1.0]])
    b.calibrate(*fx)
    cm = ContactModel([b], f_N=50, f_T=25)
    cm.begin_step(GRID, np.array([rng.uniform(0.3, 0.7, 3) * [1, 1, 0] + [0, 0, 0.6]]), fx)
    if history is not None:
        cm.history[(0, 0)] = _History(int(rng.integers(0, 2)), rng.dirichlet(np.ones(3))[:2],
                                      history * rng.standard_normal(3))
    u = 0.02 * rng.standard_normal((8, 3))
    u[:, 2] -= 0.03
    th = fx + 0.02 * rng.standard_normal((2, 3))
    th[:, 1] = fx[:, 1]
    return cm, np.concatenate([u.ravel(), th.ravel()])


def evaluate(cm, q):
    res = cm.evaluate(q[:24].reshape(8, 3), q[24:].reshape(2, 3), np.array([1e3]))
    return res


@pytest.mark.parametrize("mu,history", [(0.0, None), (0.3, None), (0.3, 0.5), (5.0, 0.01)])
def test_contact_tangent(mu, history):
    rng = np.random.default_rng(int(10 * mu) + (history is not None))
    errs, seen = [], 0
    slips = set()
    while seen < N_STATES // 4 + 1:
        cm, q = contact_state(rng, mu, history)
        res = evaluate(cm, q)
        if res.n == 0:
            continue
        # skip states within reach of a stick/slip or contact switch
        probes = [evaluate(cm, q + 1e-4 * rng.standard_normal(30) * np.isin(np.arange(30), LOCAL)) for _ in range(4)]
        if any(p.n != 1 or p.slip[0] != res.slip[0] or p.tri[0] != res.tri[0] for p in probes):
            continue
        seen += 1
        slips.add(bool(res.slip[0]))

        def R(y):
            full = q.copy()
            full[LOCAL] = y
            r = evaluate(cm, full)
            return r.R[0][LOCAL] if r.n else np.zeros(len(LOCAL))

        K = res.K[0][np.ix_(LOCAL, LOCAL)]
        errs.append(rel(central(R, q[LOCAL], 1e-7), K))
    assert max(errs) < 1e-5
    if mu == 0.3 and history is None:
        assert slips == {False, True}


def test_normal_residual_is_gradient_of_penalty_energy():
    rng = np.random.default_rng(7)
    errs = []
    while len(errs) < N_STATES:
        cm, q = contact_state(rng, 0.0, None)
        res = evaluate(cm, q)
        if res.n == 0:
            continue

        def W(y):
            full = q.copy()
            full[LOCAL] = y
            r = evaluate(cm, full)
            return 0.5 * 50.0 * 1e3 * float(r.gap[0]) ** 2 if r.n else 0.0

        if any(evaluate(cm, q + s * 1e-4 * np.isin(np.arange(30), LOCAL)).n == 0 for s in (-1, 1)):
            continue
        errs.append(rel(central(W, q[LOCAL]), res.R[0][LOCAL]))
    assert max(errs) < 1e-6
