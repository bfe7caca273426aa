"""Penalty contact between GIMP domain vertices and rigid triangle meshes.

Every contact couples one vertex, whose position is interpolated from the 8
grid nodes of the element containing its start-of-step position, with the 6
driver coordinates of one rigid body.  Local contact vectors therefore have
30 entries: 24 grid displacements (node-major) followed by (x_M, x_D).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .grid import BackgroundGrid
from .rigid import RigidBody, metric_inverse, surface_variations

log = logging.getLogger(__name__)

NLOC = 30
FACE_TOL = 1e-10


# -- closest point projection ------------------------------------------------------
def closest_on_triangles(p, a, b, c):
    """Closest points of p on triangles (a, b, c), vectorised over rows.

    Returns (closest point, xi (2,), squared distance, on_face flag).  The
    face flag is set when the orthogonal projection lies inside the triangle
    (barycentric tolerance 1e-10); otherwise the closest point is on an edge
    or a vertex and xi holds the unclamped plane projection.
    """
    ab = b - a
    ac = c - a
    ap = p - a
    m11 = np.einsum("ij,ij->i", ab, ab)
    m12 = np.einsum("ij,ij->i", ab, ac)
    m22 = np.einsum("ij,ij->i", ac, ac)
    r1 = np.einsum("ij,ij->i", ab, ap)
    r2 = np.einsum("ij,ij->i", ac, ap)
    det = m11 * m22 - m12 * m12
    xi1 = (m22 * r1 - m12 * r2) / det
    xi2 = (m11 * r2 - m12 * r1) / det
    face = (xi1 >= -FACE_TOL) & (xi2 >= -FACE_TOL) & (1.0 - xi1 - xi2 >= -FACE_TOL)
    q = a + xi1[:, None] * ab + xi2[:, None] * ac
    d2 = np.einsum("ij,ij->i", p - q, p - q)
    off = ~face
    if np.any(off):
        po, ao, bo, co = p[off], a[off], b[off], c[off]
        best = np.full(len(po), np.inf)
        bq = np.zeros_like(po)
        for s, e in ((ao, bo), (bo, co), (co, ao)):
            se = e - s
            t = np.clip(np.einsum("ij,ij->i", po - s, se) / np.einsum("ij,ij->i", se, se), 0.0, 1.0)
            qe = s + t[:, None] * se
            de = np.einsum("ij,ij->i", po - qe, po - qe)
            better = de < best
            best = np.where(better, de, best)
            bq[better] = qe[better]
        q[off] = bq
        d2[off] = best
    return q, np.stack([xi1, xi2], 1), d2, face


class SurfaceQuery:
    """Broad-phase structure over the triangles of a body at fixed theta."""

    def __init__(self, tri_xyz):
        self.tri_xyz = np.asarray(tri_xyz, dtype=float)
        self.centroids = self.tri_xyz.mean(axis=1)
        self.rmax = float(np.max(np.linalg.norm(self.tri_xyz - self.centroids[:, None, :], axis=2)))
        self.tree = cKDTree(self.centroids)
        t1 = self.tri_xyz[:, 1] - self.tri_xyz[:, 0]
        t2 = self.tri_xyz[:, 2] - self.tri_xyz[:, 0]
        nrm = np.cross(t1, t2)
        self.normals = nrm / np.linalg.norm(nrm, axis=1, keepdims=True)
        self.lo = self.tri_xyz.reshape(-1, 3).min(0)
        self.hi = self.tri_xyz.reshape(-1, 3).max(0)

    def project(self, x):
        """Global closest-point projection of every row of x.

        Returns tri (-1 for an edge/vertex minimiser), xi, signed gap, normal.
        Ties are broken in favour of face projections, then lowest index.
        """
        x = np.asarray(x, dtype=float).reshape(-1, 3)
        m = len(x)
        tri = np.full(m, -1)
        xi = np.zeros((m, 2))
        gap = np.full(m, np.inf)
        nrm = np.zeros((m, 3))
        if m == 0:
            return tri, xi, gap, nrm
        _, j0 = self.tree.query(x)
        T = self.tri_xyz
        _, _, d0, _ = closest_on_triangles(x, T[j0, 0], T[j0, 1], T[j0, 2])
        radius = np.sqrt(d0) + self.rmax + 1e-12 * (1.0 + self.rmax)
        cand = self.tree.query_ball_point(x, radius)
        counts = np.array([len(c) for c in cand])
        rows = np.repeat(np.arange(m), counts)
        cols = np.concatenate([np.asarray(c, dtype=int) for c in cand])
        _, xis, d2, face = closest_on_triangles(x[rows], T[cols, 0], T[cols, 1], T[cols, 2])
        dmin = np.full(m, np.inf)
        np.minimum.at(dmin, rows, d2)
        scale = np.maximum(dmin[rows], 1e-30)
        tie = d2 <= dmin[rows] + 1e-12 * scale + 1e-28
        # among near-ties prefer faces, then the lowest triangle index
        key = np.where(tie, np.where(face, 0, 1), 2)
        order = np.lexsort((cols, key, rows))
        first = np.ones(len(order), bool)
        first[1:] = rows[order][1:] != rows[order][:-1]
        pick = order[first]
        r = rows[pick]
        ok = face[pick]
        tri[r[ok]] = cols[pick][ok]
        xi[r] = xis[pick]
        n = self.normals[cols[pick]]
        nrm[r] = n
        q = T[cols[pick], 0] + xis[pick, :1] * (T[cols[pick], 1] - T[cols[pick], 0]) \
            + xis[pick, 1:] * (T[cols[pick], 2] - T[cols[pick], 0])
        gap[r] = np.where(ok, np.einsum("ij,ij->i", x[r] - q, n), np.sqrt(d2[pick]))
        return tri, xi, gap, nrm


def closest_point_projection(x, body_tris):
    """Single-point convenience wrapper: (tri, xi, g, n) or None for no face contact."""
    q = body_tris if isinstance(body_tris, SurfaceQuery) else SurfaceQuery(body_tris)
    tri, xi, g, n = q.project(np.asarray(x, dtype=float)[None])
    if tri[0] < 0:
        return None
    return int(tri[0]), xi[0], float(g[0]), n[0]


# -- kinematics and linearisation --------------------------------------------------
def contact_kinematics(x, xp, t, Dx, Dxp, Dt, Hxp, Ht):
    """Gap, local-coordinate variations and second variations.

    Shapes (C contacts, d local dofs): x, xp (C,3); t (C,2,3); Dx, Dxp (C,3,d);
    Dt (C,2,3,d); Hxp (C,3,d,d); Ht (C,2,3,d,d).
    """
    nrm = np.cross(t[:, 0], t[:, 1])
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    Ainv = metric_inverse(t)
    r = x - xp
    g = np.einsum("ci,ci->c", nrm, r)
    Dr = Dx - Dxp
    dg = np.einsum("ci,cid->cd", nrm, Dr)
    tDr = np.einsum("cbi,cid->cbd", t, Dr)
    nDt = np.einsum("ci,cbid->cbd", nrm, Dt)
    Dxi = np.einsum("cab,cbd->cad", Ainv, tDr + g[:, None, None] * nDt)

    nHxp = np.einsum("ci,cide->cde", nrm, Hxp)
    Hg = (-np.einsum("cad,cae->cde", nDt, Dxi) - np.einsum("cad,cae->cde", Dxi, nDt) - nHxp
          + g[:, None, None] * np.einsum("cab,cad,cbe->cde", Ainv, nDt, nDt))

    tDt = np.einsum("cbi,cgid->cbgd", t, Dt)  # t_b . Dt_g
    tHxp = np.einsum("cbi,cide->cbde", t, Hxp)
    DtDr = np.einsum("cbid,cie->cbde", Dt, Dr)
    nHt = np.einsum("ci,cbide->cbde", nrm, Ht)
    rhs = (-np.einsum("cgd,cbge->cbde", Dxi, tDt)  # outer(Dxi_s, t_b.Dt_s)
           - np.einsum("cbgd,cge->cbde", tDt, Dxi)  # outer(t_b.Dt_g, Dxi_g)
           - tHxp
           - np.einsum("cgd,cgbe->cbde", Dxi, tDt)  # outer(Dxi_g, t_g.Dt_b)
           - np.einsum("cgbd,cge->cbde", tDt, Dxi)  # outer(t_g.Dt_b, Dxi_g)
           + np.swapaxes(DtDr, -1, -2) + DtDr
           + g[:, None, None, None] * nHt)
    Hxi = np.einsum("cab,cbde->cade", Ainv, rhs)
    return dict(n=nrm, g=g, Ainv=Ainv, dg=dg, Dxi=Dxi, Hg=Hg, Hxi=Hxi)


def normal_residual_tangent(kin, eps_n):
    """Penalty normal contribution R = eps g dg, K = eps (dg dg + g Hg) where g < 0."""
    g = kin["g"]
    pen = g < 0.0
    eN = np.where(pen, eps_n, 0.0)
    R = (eN * g)[:, None] * kin["dg"]
    K = eN[:, None, None] * (np.einsum("cd,ce->cde", kin["dg"], kin["dg"]) + g[:, None, None] * kin["Hg"])
    return R, K, eN * g


def friction_return_map(p_prev, slip, eps_t, mu, pN_abs):
    """Trial tangential force and Coulomb return.

    ``p_prev`` and ``slip`` (the tangential movement vector) are (C,3).
    Returns (p_T, p_trial, is_slip).
    """
    p_tr = p_prev + eps_t[:, None] * slip
    ntr = np.linalg.norm(p_tr, axis=1)
    f = ntr - mu * pN_abs
    is_slip = f >= 0.0
    safe = np.where(ntr > 0.0, ntr, 1.0)
    scale = np.where(is_slip, np.where(ntr > 0.0, mu * pN_abs / safe, 0.0), 1.0)
    return p_tr * scale[:, None], p_tr, is_slip


def tangential_residual_tangent(kin, t, Dt, xi, xi_m, p_prev, eps_t, eps_n, mu):
    """Coulomb friction contribution for active contacts.

    The residual is R_T = sum_a (t_a . p_T) Dxi_a.  Stick and slip tangents
    follow from differentiating p_T with respect to the local dofs.
    """
    g = kin["g"]
    dxi = xi - xi_m
    slip_vec = np.einsum("ca,cai->ci", dxi, t)
    pN_abs = eps_n * np.maximum(-g, 0.0)
    pT, p_tr, is_slip = friction_return_map(p_prev, slip_vec, eps_t, mu, pN_abs)
    Dxi, Hxi = kin["Dxi"], kin["Hxi"]
    tp = np.einsum("cai,ci->ca", t, pT)
    R = np.einsum("ca,cad->cd", tp, Dxi)

    Dptr = eps_t[:, None, None] * (np.einsum("caid,ca->cid", Dt, dxi) + np.einsum("cai,cad->cid", t, Dxi))
    DpT = Dptr.copy()
    sl = np.nonzero(is_slip)[0]
    if len(sl):
        ntr = np.linalg.norm(p_tr[sl], axis=1)
        ok = ntr > 0.0
        DpT[sl] = 0.0
        s_ = sl[ok]
        if len(s_):
            ntr = ntr[ok]
            s = p_tr[s_] / ntr[:, None]
            proj = np.eye(3) - np.einsum("ci,cj->cij", s, s)
            DpT[s_] = (-mu * eps_n[s_, None, None] * np.einsum("ci,cd->cid", s, kin["dg"][s_])
                       + (mu * pN_abs[s_] / ntr)[:, None, None] * np.einsum("cij,cjd->cid", proj, Dptr[s_]))
    K = (np.einsum("ca,cade->cde", tp, Hxi)
         + np.einsum("cad,cae->cde", Dxi,
                     np.einsum("ci,caie->cae", pT, Dt) + np.einsum("cai,cie->cae", t, DpT)))
    return R, K, pT, p_tr, is_slip


# -- contact model ---------------------------------------------------------------------
@dataclass
class ContactResult:
    vid: np.ndarray
    body: np.ndarray
    tri: np.ndarray
    xi: np.ndarray
    gap: np.ndarray
    normal: np.ndarray
    pN: np.ndarray  # signed normal force eps g (<= 0)
    pT: np.ndarray
    slip: np.ndarray
    mu: np.ndarray
    R: np.ndarray  # (C, 30)
    K: np.ndarray  # (C, 30, 30)
    grid_nodes: np.ndarray  # (C, 8)
    body_force: np.ndarray = field(default=None)  # (n_bodies, 3) force exerted by the soil on each body

    @property
    def n(self):
        return len(self.vid)


@dataclass
class _History:
    tri: int
    xi: np.ndarray
    pT: np.ndarray


class ContactModel:
    """Contact bookkeeping for all vertices against all rigid bodies."""

    def __init__(self, bodies, f_N=50.0, f_T=25.0, search_margin=None):
        self.bodies = list(bodies)
        self.f_N = float(f_N)
        self.f_T = float(f_T)
        self.search_margin = search_margin
        self.history = {}  # (vertex id, body index) -> _History
        self._start_tris = None
        self._X = None
        self._vnodes = None
        self._vN = None

    # -- step set-up -------------------------------------------------------------
    def begin_step(self, grid: BackgroundGrid, vertices, frame_x):
        """Record start-of-step vertex positions, their grid stencils and body poses."""
        X = np.asarray(vertices, dtype=float).reshape(-1, 3)
        self._X = X
        nodes, N, _ = grid.shape_at(X)
        self._vnodes = nodes
        self._vN = N
        self._start_tris = [b.triangle_vertices(*self._drivers(b, frame_x)) for b in self.bodies]
        self._start_queries = [SurfaceQuery(t) for t in self._start_tris]

    def vertex_positions(self, u_nodes):
        return self._X + np.einsum("vk,vki->vi", self._vN, np.asarray(u_nodes)[self._vnodes])

    @staticmethod
    def _drivers(body, frame_x):
        return frame_x[body.driver_nodes[0]], frame_x[body.driver_nodes[1]]

    def _candidates(self, q: SurfaceQuery, x):
        margin = self.search_margin
        if margin is None:
            margin = 0.25 * float(np.max(q.hi - q.lo)) + 1e-12
        inside = np.all((x >= q.lo - margin) & (x <= q.hi + margin), axis=1)
        return np.nonzero(inside)[0]

    def _reference_xi(self, b, key, tri):
        """Start-of-step local coordinates of the material contact point on ``tri``."""
        T = self._start_tris[b][tri]
        h = self.history.get(key)
        if h is None:
            src = self._X[key[0]]
            p_prev = np.zeros(3)
        else:
            To = self._start_tris[b][h.tri]
            src = To[0] + h.xi[0] * (To[1] - To[0]) + h.xi[1] * (To[2] - To[0])
            p_prev = h.pT
        t1, t2 = T[1] - T[0], T[2] - T[0]
        A = np.array([[t1 @ t1, t1 @ t2], [t1 @ t2, t2 @ t2]])
        xi = np.linalg.solve(A, [t1 @ (src - T[0]), t2 @ (src - T[0])])
        if h is not None and h.tri == tri:
            xi = h.xi
        n = np.cross(t1, t2)
        n /= np.linalg.norm(n)
        return xi, p_prev - (p_prev @ n) * n

    # -- evaluation ---------------------------------------------------------------
    def evaluate(self, u_nodes, frame_x, E_vertex, with_tangent=True):
        """Active contacts, local residuals and tangents at the current iterate.

        ``E_vertex`` holds the Young's modulus of the point owning each vertex;
        penalties are ``f_N E`` and ``f_T E``.
        """
        x_all = self.vertex_positions(u_nodes)
        out = []
        body_force = np.zeros((len(self.bodies), 3))
        for b, body in enumerate(self.bodies):
            xM, xD = self._drivers(body, frame_x)
            q = SurfaceQuery(body.triangle_vertices(xM, xD))
            cand = self._candidates(q, x_all)
            tri, xi, gap, _ = q.project(x_all[cand])
            act = (tri >= 0) & (gap < 0.0)
            vid = cand[act]
            if len(vid) == 0:
                continue
            tri, xi = tri[act], xi[act]
            C = len(vid)
            x = x_all[vid]
            Dx = np.zeros((C, 3, NLOC))
            for k in range(8):
                Dx[:, :, 3 * k:3 * k + 3] = self._vN[vid, k, None, None] * np.eye(3)
            Dxp = np.zeros((C, 3, NLOC))
            Dt = np.zeros((C, 2, 3, NLOC))
            Hxp = np.zeros((C, 3, NLOC, NLOC))
            Ht = np.zeros((C, 2, 3, NLOC, NLOC))
            xp = np.zeros((C, 3))
            t = np.zeros((C, 2, 3))
            xi_m = np.zeros((C, 2))
            p_prev = np.zeros((C, 3))
            for c in range(C):
                T = q.tri_xyz[tri[c]]
                xp[c] = T[0] + xi[c, 0] * (T[1] - T[0]) + xi[c, 1] * (T[2] - T[0])
                t[c] = [T[1] - T[0], T[2] - T[0]]
                a, d, h2, ht = surface_variations(body, tri[c], xi[c], xM, xD)
                Dxp[c, :, 24:] = a
                Dt[c, :, :, 24:] = d
                Hxp[c, :, 24:, 24:] = h2
                Ht[c, :, :, 24:, 24:] = ht
                xi_m[c], p_prev[c] = self._reference_xi(b, (int(vid[c]), b), int(tri[c]))
            kin = contact_kinematics(x, xp, t, Dx, Dxp, Dt, Hxp, Ht)
            E = np.asarray(E_vertex)[vid]
            eps_n = self.f_N * E
            eps_t = self.f_T * E
            RN, KN, pN = normal_residual_tangent(kin, eps_n)
            mu = float(body.mu)
            if mu > 0.0:
                RT, KT, pT, _, is_slip = tangential_residual_tangent(kin, t, Dt, xi, xi_m, p_prev, eps_t, eps_n, mu)
            else:
                RT, KT = 0.0, 0.0
                pT = np.zeros((C, 3))
                is_slip = np.ones(C, bool)
            R = RN + RT
            K = KN + KT
            body_force[b] = -R[:, 24:27].sum(0) - R[:, 27:30].sum(0)
            out.append(ContactResult(vid, np.full(C, b), tri, xi, kin["g"], kin["n"], pN, pT, is_slip,
                                     np.full(C, mu), R, K, self._vnodes[vid]))
        if not out:
            z = np.zeros(0, int)
            res = ContactResult(z, z, z, np.zeros((0, 2)), np.zeros(0), np.zeros((0, 3)), np.zeros(0),
                                np.zeros((0, 3)), np.zeros(0, bool), np.zeros(0), np.zeros((0, NLOC)),
                                np.zeros((0, NLOC, NLOC)), np.zeros((0, 8), int))
        else:
            res = ContactResult(*[np.concatenate([getattr(o, f) for o in out])
                                  for f in ("vid", "body", "tri", "xi", "gap", "normal", "pN", "pT",
                                            "slip", "mu", "R", "K", "grid_nodes")])
        res.body_force = body_force
        return res

    def commit(self, result: ContactResult):
        """Store the converged contact state as next step's history."""
        self.history = {
            (int(v), int(b)): _History(int(t), np.array(x), np.array(p))
            for v, b, t, x, p in zip(result.vid, result.body, result.tri, result.xi, result.pT)
        }

    def remap_vertices(self, mapping):
        """Re-key history after vertex renumbering (old id -> new id)."""
        self.history = {(mapping[v], b): h for (v, b), h in self.history.items() if v in mapping}


# -- force spreading ---------------------------------------------------------------
def spread_vertex_force_to_grid(grid: BackgroundGrid, x, force):
    """Distribute a vertex force to grid nodes with trilinear shape functions."""
    nodes, N, _ = grid.shape_at(np.asarray(x, dtype=float)[None])
    return nodes[0], N[0][:, None] * np.asarray(force, dtype=float)


def spread_to_rigid(body: RigidBody, tri, xi, force, xM, xD):
    """Reaction on the truss drivers (x_M, x_D) for a force applied at a surface point."""
    Dxp, _, _, _ = surface_variations(body, tri, xi, xM, xD)
    f = Dxp.T @ np.asarray(force, dtype=float)
    return f[:3], f[3:]


# -- Algorithm-1 gap correction -----------------------------------------------------------
def vertex_gaps(query: SurfaceQuery, verts):
    """Penetration-only gaps min(g, 0) for face projections, 0 otherwise."""
    tri, _, g, _ = query.project(verts)
    return np.where((tri >= 0) & (g < 0.0), g, 0.0)


def minimise_reset_gap(x, lp, g_old, eps_old, eps_new, query: SurfaceQuery, tol=1e-4, max_iter=2000,
                       step_divisor=200.0):
    """Move a reset GIMP domain so its vertex gap profile matches the old one.

    Forward-Euler descent on E(x) = sum_n (eps_old g_old - eps_new g_new(x))^2
    with step length h_p/200 (capped by the quadratic-model distance to the
    minimum so the last step cannot overshoot).  Stops when
    E <= tol * sum_n (eps_old g_old)^2.  Returns (x, info dict).
    """
    from .grid import HEX_SIGNS

    x = np.asarray(x, dtype=float).copy()
    lp = np.asarray(lp, dtype=float)
    g_old = np.asarray(g_old, dtype=float)
    target = eps_old * g_old
    E_old = float(np.sum(target ** 2))
    hp = float(np.min(2.0 * lp))
    fd = hp * 1e-6
    corners = HEX_SIGNS * lp

    def energy(xc):
        g = vertex_gaps(query, xc + corners)
        return float(np.sum((target - eps_new * g) ** 2))

    E = energy(x)
    info = dict(E_old=E_old, E_start=E, iterations=0, converged=True)
    if E_old == 0.0:
        info["E"] = E
        return x, info
    best_x, best_E = x.copy(), E
    it = 0
    step_len = hp / step_divisor
    while E / E_old > tol:
        if it >= max_iter:
            info["converged"] = False
            log.warning("gap correction hit the iteration cap (E/E_old = %.3g)", best_E / E_old)
            break
        R = np.array([(energy(x + fd * e) - energy(x - fd * e)) / (2.0 * fd) for e in np.eye(3)])
        nR = float(np.linalg.norm(R))
        if nR == 0.0:
            info["converged"] = False
            log.warning("gap correction stalled: zero energy gradient")
            break
        s = min(step_len, 2.0 * E / nR)
        x_new = x - s * R / nR
        E_new = energy(x_new)
        it += 1
        if E_new >= E:
            step_len *= 0.5
            if step_len < 1e-12 * hp:
                info["converged"] = False
                break
            continue
        x, E = x_new, E_new
        if E < best_E:
            best_x, best_E = x.copy(), E
    info.update(E=best_E, iterations=it)
    return best_x, info
