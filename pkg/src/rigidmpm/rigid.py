"""Rigid triangulated bodies driven by a planar truss frame.

Every surface node is a fixed combination of the frame tangent ``t`` (unit
vector from driver point x_M to x_D), the normal ``n = R t`` and x_M:

    x_n = A_n n + B_n t + x_M + Y_n e_y

so the 6 driver coordinates ``theta = (x_M, x_D)`` carry translation and the
in-plane (x-z) rotation.  ``Y_n`` is the constant out-of-plane offset.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigError, InvalidMeshError, SingularFrameError
from .meshes import TriMesh

R_Y = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])
_I3 = np.eye(3)
# derivative sign of v = x_D - x_M with respect to (x_M, x_D)
_SIGN = np.array([-1.0, 1.0])


def frame_tangent(xM, xD):
    v = np.asarray(xD, dtype=float) - np.asarray(xM, dtype=float)
    nv = float(np.linalg.norm(v))
    if not nv > 1e-14:
        raise SingularFrameError("driver points x_M and x_D coincide")
    return v / nv, nv


def tangent_variations(xM, xD):
    """t, dt/dv (3x3) and d2t/dv2 (3x3x3) for v = x_D - x_M."""
    t, nv = frame_tangent(xM, xD)
    P = _I3 - np.outer(t, t)
    dt = P / nv
    H = -(np.einsum("b,ia->iab", t, P) + np.einsum("a,ib->iab", t, P)
          + np.einsum("i,ab->iab", t, P)) / nv ** 2
    return t, dt, H


@dataclass
class TrussFrame:
    """Bar elements with lumped nodal masses, constraints and prescribed motion."""

    x: np.ndarray  # (N, 3) current node positions
    mass: np.ndarray  # (N,)
    elements: np.ndarray  # (E, 2)
    stiffness: np.ndarray  # (E,) axial stiffness E_f (N/m)
    fixed: np.ndarray = None  # (N, 3) bool
    f_ext: np.ndarray = None  # (N, 3)
    velocity: np.ndarray = None  # (N, 3) prescribed velocity on fixed DOFs
    rest_length: np.ndarray = None
    v: np.ndarray = None
    a: np.ndarray = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(-1, 3)
        n = len(self.x)
        self.mass = np.broadcast_to(np.asarray(self.mass, dtype=float), (n,)).copy()
        self.elements = np.asarray(self.elements, dtype=int).reshape(-1, 2)
        self.stiffness = np.broadcast_to(np.asarray(self.stiffness, dtype=float), (len(self.elements),)).copy()
        if np.any(self.mass < 0.0):
            raise InvalidConfigError("frame masses must be non-negative")
        self.fixed = np.zeros((n, 3), bool) if self.fixed is None else np.asarray(self.fixed, bool).reshape(n, 3).copy()
        self.f_ext = np.zeros((n, 3)) if self.f_ext is None else np.asarray(self.f_ext, float).reshape(n, 3).copy()
        self.velocity = np.zeros((n, 3)) if self.velocity is None else np.asarray(self.velocity, float).reshape(n, 3).copy()
        self.v = np.zeros((n, 3)) if self.v is None else np.asarray(self.v, float).reshape(n, 3).copy()
        self.a = np.zeros((n, 3)) if self.a is None else np.asarray(self.a, float).reshape(n, 3).copy()
        if self.rest_length is None:
            self.rest_length = self.lengths(self.x)
        self.rest_length = np.asarray(self.rest_length, dtype=float)
        if np.any(self.rest_length <= 0.0):
            raise InvalidConfigError("truss elements need positive rest length")

    @property
    def n_nodes(self):
        return len(self.x)

    def lengths(self, x):
        if len(self.elements) == 0:
            return np.zeros(0)
        d = x[self.elements[:, 1]] - x[self.elements[:, 0]]
        return np.linalg.norm(d, axis=1)

    def internal(self, x):
        """Internal force (N, 3) and element stiffness blocks (E, 6, 6).

        Tension ``T = E_f (L - L0)`` pulls node 2 towards node 1; the force
        vector is the gradient of the spring energy.
        """
        n = len(self.x)
        f = np.zeros((n, 3))
        if len(self.elements) == 0:
            return f, np.zeros((0, 6, 6))
        i, j = self.elements[:, 0], self.elements[:, 1]
        d = x[j] - x[i]
        L = np.linalg.norm(d, axis=1)
        if np.any(L <= 1e-14 * np.maximum(self.rest_length, 1.0)):
            raise SingularFrameError("truss element collapsed to zero length")
        e = d / L[:, None]
        T = self.stiffness * (L - self.rest_length)
        np.add.at(f, j, T[:, None] * e)
        np.add.at(f, i, -T[:, None] * e)
        ee = np.einsum("ea,eb->eab", e, e)
        k = self.stiffness[:, None, None] * ee + (T / L)[:, None, None] * (_I3 - ee)
        K = np.zeros((len(L), 6, 6))
        K[:, :3, :3] = k
        K[:, 3:, 3:] = k
        K[:, :3, 3:] = -k
        K[:, 3:, :3] = -k
        return f, K

    def state_arrays(self):
        return {"x": self.x, "v": self.v, "a": self.a, "fixed": self.fixed,
                "velocity": self.velocity, "f_ext": self.f_ext}


def truss_residual(frame: TrussFrame, x, accel, gravity=(0.0, 0.0, 0.0), f_contact=None,
                   quasi_static=False):
    """Frame residual ``f_int + M a - f_ext - m g - f_contact`` and tangent blocks.

    The Newmark mass term ``M / (beta dt^2)`` is added by the solver.
    """
    f_int, K = frame.internal(x)
    g = np.asarray(gravity, dtype=float)
    R = f_int - frame.f_ext - frame.mass[:, None] * g
    if f_contact is not None:
        R = R - f_contact
    if not quasi_static:
        R = R + frame.mass[:, None] * accel
    return R, K


@dataclass
class RigidBody:
    mesh: TriMesh
    driver_nodes: tuple  # frame node indices of (x_M, x_D)
    mu: float = 0.0
    name: str = "body"
    A: np.ndarray = field(default=None, repr=False)
    B: np.ndarray = field(default=None, repr=False)
    Y: np.ndarray = field(default=None, repr=False)

    def calibrate(self, xM, xD):
        """Per-node constants from the current mesh position and driver points."""
        xM = np.asarray(xM, dtype=float)
        xD = np.asarray(xD, dtype=float)
        t, _ = frame_tangent(xM, xD)
        if abs(t[1]) > 1e-12:
            raise InvalidConfigError("driver points must share the same y coordinate (x-z plane motion)")
        n = R_Y @ t
        r = self.mesh.vertices - xM
        self.A = r @ n
        self.B = r @ t
        self.Y = r[:, 1].copy()
        return self.A, self.B

    def node_positions(self, xM, xD):
        t, _ = frame_tangent(xM, xD)
        n = R_Y @ t
        return self.A[:, None] * n + self.B[:, None] * t + np.asarray(xM, dtype=float) + self.Y[:, None] * [0.0, 1.0, 0.0]

    def node_jacobians(self, xM, xD, nodes=None):
        """dx_n/d(theta) as (n, 3, 6) and d2x_n/d(theta)2 as (n, 3, 6, 6)."""
        t, dt, H = tangent_variations(xM, xD)
        A = self.A if nodes is None else self.A[nodes]
        B = self.B if nodes is None else self.B[nodes]
        C = A[:, None, None] * R_Y + B[:, None, None] * _I3  # (n, 3, 3)
        Ct = C @ dt
        G = np.zeros((len(A), 3, 6))
        G[:, :, 3:] = Ct
        G[:, :, :3] = _I3 - Ct
        CH = np.einsum("nij,jab->niab", C, H)
        HG = np.zeros((len(A), 3, 6, 6))
        for s1 in range(2):
            for s2 in range(2):
                HG[:, :, 3 * s1:3 * s1 + 3, 3 * s2:3 * s2 + 3] = _SIGN[s1] * _SIGN[s2] * CH
        return G, HG

    def triangle_vertices(self, xM, xD):
        return self.node_positions(xM, xD)[self.mesh.triangles]

    def rigidity_error(self, xM, xD):
        """Max |x_n - reconstruction| after calibration (should be round-off)."""
        return float(np.max(np.abs(self.node_positions(xM, xD) - self.mesh.vertices)))


def surface_point(tri_xyz, xi):
    """Point and tangents on a linear triangle with corners ``tri_xyz`` (..., 3, 3)."""
    tri_xyz = np.asarray(tri_xyz, dtype=float)
    xi = np.asarray(xi, dtype=float)
    N = np.stack([1.0 - xi[..., 0] - xi[..., 1], xi[..., 0], xi[..., 1]], -1)
    x = np.einsum("...k,...ki->...i", N, tri_xyz)
    t1 = tri_xyz[..., 1, :] - tri_xyz[..., 0, :]
    t2 = tri_xyz[..., 2, :] - tri_xyz[..., 0, :]
    return x, np.stack([t1, t2], -2)


def surface_variations(body: RigidBody, tri, xi, xM, xD):
    """First and second derivatives of x' and t_alpha w.r.t. theta.

    Returns ``Dxp`` (3, 6), ``Dt`` (2, 3, 6), ``Hxp`` (3, 6, 6), ``Ht`` (2, 3, 6, 6).
    """
    nodes = body.mesh.triangles[tri]
    G, HG = body.node_jacobians(xM, xD, nodes)
    N = np.array([1.0 - xi[0] - xi[1], xi[0], xi[1]])
    Dxp = np.einsum("k,kij->ij", N, G)
    Hxp = np.einsum("k,kijl->ijl", N, HG)
    Dt = np.stack([G[1] - G[0], G[2] - G[0]])
    Ht = np.stack([HG[1] - HG[0], HG[2] - HG[0]])
    return Dxp, Dt, Hxp, Ht


def metric_inverse(t):
    """Inverse first fundamental form (t_a . t_b)^-1 for tangents (..., 2, 3)."""
    A = np.einsum("...ai,...bi->...ab", t, t)
    det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] ** 2
    if np.any(det <= 1e-300):
        raise InvalidMeshError("degenerate triangle: singular metric")
    inv = np.empty_like(A)
    inv[..., 0, 0] = A[..., 1, 1] / det
    inv[..., 1, 1] = A[..., 0, 0] / det
    inv[..., 0, 1] = inv[..., 1, 0] = -A[..., 0, 1] / det
    return inv


# -- frame builders ------------------------------------------------------------------
def two_node_frame(xM, xD, mass=(0.0, 0.0), stiffness=1e9, fix_all=True):
    """Single-member frame; with ``fix_all`` both drivers are fully prescribed."""
    fixed = np.ones((2, 3), bool) if fix_all else np.zeros((2, 3), bool)
    return TrussFrame(np.array([xM, xD], dtype=float), np.asarray(mass, dtype=float),
                      np.array([[0, 1]]), stiffness, fixed=fixed)


def ring_frame(center, ring_radius, total_mass, n_ring=100, stiffness=1e9, constrain_y=True):
    """Massless hub plus a ring of equal masses in the x-z plane.

    Spokes join the hub to every ring node and neighbouring ring nodes are
    joined, which makes the frame rigid in-plane.  Drivers are the hub (0)
    and ring node 0 (1).
    """
    c = np.asarray(center, dtype=float)
    ang = 2.0 * np.pi * np.arange(n_ring) / n_ring
    ring = c + ring_radius * np.stack([np.cos(ang), np.zeros(n_ring), np.sin(ang)], 1)
    x = np.vstack([c, ring])
    mass = np.concatenate([[0.0], np.full(n_ring, total_mass / n_ring)])
    spokes = np.stack([np.zeros(n_ring, int), 1 + np.arange(n_ring)], 1)
    rim = np.stack([1 + np.arange(n_ring), 1 + (np.arange(n_ring) + 1) % n_ring], 1)
    fixed = np.zeros((n_ring + 1, 3), bool)
    if constrain_y:
        fixed[:, 1] = True
    return TrussFrame(x, mass, np.vstack([spokes, rim]), stiffness, fixed=fixed)


def ring_inertia(frame: TrussFrame, center, axis=1):
    r = frame.x - np.asarray(center, dtype=float)
    r[:, axis] = 0.0
    return float(np.sum(frame.mass * np.sum(r * r, axis=1)))
