import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rigidmpm.errors import InvalidConfigError, SingularFrameError
from rigidmpm.meshes import icosphere
from rigidmpm.rigid import (RigidBody, TrussFrame, frame_tangent, ring_frame, ring_inertia, surface_point,
                            surface_variations, truss_residual)


def rot_y(th):
    return np.array([[math.cos(th), 0.0, math.sin(th)], [0.0, 1.0, 0.0], [-math.sin(th), 0.0, math.cos(th)]])


def body_at(xM, xD, seed=0):
    mesh = icosphere(0.3, 1, (0.2, 0.1, -0.1))
    b = RigidBody(mesh, (0, 1))
    b.calibrate(xM, xD)
    return b


XM = np.array([0.1, 0.1, 0.2])
XD = np.array([0.9, 0.1, 0.5])


def test_calibrate_driver_nodes():
    t, _ = frame_tangent(XM, XD)
    mesh = icosphere(0.3, 1)
    mesh.vertices[0] = XM
    mesh.vertices[1] = XM + t
    b = RigidBody(mesh, (0, 1))
    A, B = b.calibrate(XM, XD)
    assert A[0] == pytest.approx(0.0, abs=1e-15) and B[0] == pytest.approx(0.0, abs=1e-15)
    assert A[1] == pytest.approx(0.0, abs=1e-14) and B[1] == pytest.approx(1.0, rel=1e-14)


def test_calibrate_rejects_degenerate():
    with pytest.raises(SingularFrameError):
        body_at(XM, XM)
    with pytest.raises(InvalidConfigError):
        body_at(XM, XD + [0.0, 0.5, 0.0])


@given(st.floats(-math.pi, math.pi), st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_rigid_motion_matches_rotation(th, d):
    b = body_at(XM, XD)
    d = np.array(d)
    d[1] = 0.0  # in-plane motion
    Q = rot_y(th)
    moved = b.node_positions(Q @ XM + d, Q @ XD + d)
    oracle = (b.mesh.vertices - XM) @ Q.T + Q @ XM + d
    np.testing.assert_allclose(moved, oracle, atol=1e-12)
    D0 = np.linalg.norm(b.mesh.vertices[:, None] - b.mesh.vertices[None], axis=-1)
    D1 = np.linalg.norm(moved[:, None] - moved[None], axis=-1)
    assert np.abs(D1 - D0).max() <= 1e-10 * b.mesh.bbox_size


def test_rigidity_error_after_calibration():
    b = body_at(XM, XD)
    assert b.rigidity_error(XM, XD) < 1e-14


def test_surface_point_corner_and_centroid():
    T = np.array([[0.0, 0.0, 0.0], [1.0, 0.2, 0.0], [0.3, 1.0, 0.5]])
    for k, xi in enumerate([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]):
        x, _ = surface_point(T, xi)
        np.testing.assert_allclose(x, T[k], atol=1e-15)
    x, t = surface_point(T, (1 / 3, 1 / 3))
    np.testing.assert_allclose(x, T.mean(0), atol=1e-15)
    np.testing.assert_allclose(t, [T[1] - T[0], T[2] - T[0]])


def test_translation_variation():
    b = body_at(XM, XD)
    Dxp, Dt, _, _ = surface_variations(b, 3, np.array([0.2, 0.3]), XM, XD)
    d = np.array([0.3, -0.2, 0.7])
    dtheta = np.concatenate([d, d])
    np.testing.assert_allclose(Dt @ dtheta, 0.0, atol=1e-14)
    np.testing.assert_allclose(Dxp @ dtheta, d, atol=1e-14)


def test_truss_unloaded():
    f = TrussFrame([[0, 0, 0], [1, 0, 0], [0, 0, 1]], [1.0, 2.0, 3.0], [[0, 1], [1, 2], [0, 2]], 1e5,
                   f_ext=[[0, 0, 0], [1, 2, 3], [0, 0, -1]])
    R, _ = truss_residual(f, f.x, np.zeros((3, 3)), quasi_static=True)
    np.testing.assert_allclose(R, -f.f_ext, atol=1e-12)


def test_truss_double_length_force():
    f = TrussFrame([[0, 0, 0], [2, 0, 0]], 0.0, [[0, 1]], 1e3, rest_length=[1.0])
    fint, K = f.internal(f.x)
    np.testing.assert_allclose(fint[1], [1e3 * 1.0, 0, 0])
    np.testing.assert_allclose(fint[0], [-1e3 * 1.0, 0, 0])
    # tangent versus central differences of the internal force
    h = 1e-6
    num = np.zeros((6, 6))
    for k in range(6):
        dx = np.zeros(6)
        dx[k] = h
        num[:, k] = (f.internal(f.x + dx.reshape(2, 3))[0] - f.internal(f.x - dx.reshape(2, 3))[0]).ravel() / (2 * h)
    np.testing.assert_allclose(K[0], num, rtol=1e-6, atol=1e-6)


def test_truss_collapsed_element():
    f = TrussFrame([[0, 0, 0], [1, 0, 0]], 0.0, [[0, 1]], 1e3)
    with pytest.raises(SingularFrameError):
        f.internal(np.zeros((2, 3)))


@pytest.mark.parametrize("factor", [math.sqrt(0.4), 1 / math.sqrt(2)])
def test_ring_inertia(factor):
    r, m = 0.5, 3.0
    fr = ring_frame([0, 0, 0], r * factor, m, n_ring=100)
    assert ring_inertia(fr, [0, 0, 0]) == pytest.approx(factor ** 2 * m * r * r, rel=1e-3)
    assert fr.mass.sum() == pytest.approx(m)
