"""Monolithic implicit Newmark / Newton-Raphson solver.

Unknowns are the displacement increments of the active grid nodes (3 per
node, node-major, nodes in ascending id) followed by the truss-frame node
displacements.  Each step follows the usual MPM cycle: map points to the
grid, iterate to equilibrium, map back, reset the point domains, correct
contact gaps and discard the grid solution.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import points as pts
from .contact import ContactModel, SurfaceQuery, minimise_reset_gap
from .errors import (ElementInversionError, IllConditioningError, InvalidConfigError, MaterialError,
                     NonConvergenceError, OutOfDomainError, RigidMPMError, SimulationAbort)
from .grid import BackgroundGrid
from .rigid import TrussFrame
from .stabilize import select_ghost_faces, stabilisation_matrices

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass
class NewmarkParams:
    gamma: float = 0.5
    beta: float = 0.25
    dt: float = 1.0

    def __post_init__(self):
        if not self.beta > 0.0 or not self.dt > 0.0:
            raise InvalidConfigError("Newmark needs beta > 0 and dt > 0")


def newmark_kinematics(u, v_n, a_n, gamma, beta, dt):
    """Velocity and acceleration at n+1 for the displacement increment u (u_n = 0)."""
    u = np.asarray(u, dtype=float)
    v = gamma / (beta * dt) * u + (1.0 - gamma / beta) * v_n + dt * (1.0 - gamma / (2.0 * beta)) * a_n
    a = u / (beta * dt * dt) - v_n / (beta * dt) - (1.0 / (2.0 * beta) - 1.0) * a_n
    return v, a


@dataclass
class SolverSettings:
    dt: float = 0.1
    t_end: float = 1.0
    gamma: float = 0.5
    beta: float = 0.25
    tol_rel: float = 1e-6
    tol_abs: float = 1e-9
    max_iter: int = 25
    max_halvings: int = 10
    quasi_static: bool = False
    gravity: tuple = (0.0, 0.0, 0.0)
    gravity_ramp_steps: int = 0
    stabilise_mass: bool = True
    stabilise_stiffness: bool = True
    gamma_m_scale: float = 1.0
    gamma_k_scale: float = 1.0
    gap_correction: bool = True
    gap_tol: float = 1e-4  # stop when E / E_old falls below this
    max_increment: float = 0.5  # cap on a Newton grid increment, in units of the smallest cell size
    max_backtracks: int = 6
    inject_failures: tuple = ()  # step indices whose first full-size attempt is forced to fail
    dump_dir: str = "."


@dataclass
class DirichletBC:
    """Fixed grid displacement components.

    ``kind`` is "plane" (nodes with coords[axis] == value) or "box"
    (nodes inside [lo, hi]).  ``components`` lists the fixed directions.
    """

    kind: str
    components: tuple
    axis: int = 0
    value: float = 0.0
    lo: tuple = None
    hi: tuple = None

    def mask(self, grid: BackgroundGrid, node_ids):
        X = grid.node_coords(node_ids)
        if self.kind == "plane":
            tol = 1e-9 * max(1.0, abs(self.value))
            hit = np.abs(X[:, self.axis] - self.value) <= tol
        elif self.kind == "box":
            tol = 1e-9
            hit = np.all((X >= np.asarray(self.lo) - tol) & (X <= np.asarray(self.hi) + tol), axis=1)
        else:
            raise InvalidConfigError(f"unknown boundary condition kind {self.kind!r}")
        m = np.zeros((len(node_ids), 3), bool)
        for c in self.components:
            m[hit, c] = True
        return m


def roller_box(grid: BackgroundGrid):
    """Rollers on all six grid faces (normal component fixed)."""
    out = []
    for d in range(3):
        out.append(DirichletBC("plane", (d,), axis=d, value=float(grid.lo[d])))
        out.append(DirichletBC("plane", (d,), axis=d, value=float(grid.hi[d])))
    return out


@dataclass
class StepRecord:
    index: int
    time: float
    dt: float
    halvings: int
    iterations: int
    residuals: list = field(default_factory=list)


class _Pattern:
    """Cached block-sparse pattern for the grid part of the tangent."""

    def __init__(self, n, rows, cols):
        key = rows.astype(np.int64) * n + cols
        uniq, inv = np.unique(key, return_inverse=True)
        self.n = n
        self.inv = inv
        self.nnz = len(uniq)
        r = (uniq // n).astype(np.int64)
        self.indices = (uniq % n).astype(np.int32)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(r, minlength=n))]).astype(np.int32)

    def bsr(self, blocks):
        """Sum (entries, 3, 3) blocks into a BSR matrix."""
        flat = blocks.reshape(len(blocks), 9)
        data = np.empty((self.nnz, 9))
        for k in range(9):
            data[:, k] = np.bincount(self.inv, flat[:, k], minlength=self.nnz)
        return sp.bsr_matrix((data.reshape(-1, 3, 3), self.indices, self.indptr), shape=(3 * self.n, 3 * self.n))


class Simulation:
    def __init__(self, grid: BackgroundGrid, points: pts.MaterialPoints, materials, settings: SolverSettings,
                 bcs=(), frame: TrussFrame = None, bodies=(), f_N=50.0, f_T=25.0):
        self.grid = grid
        self.points = points
        self.materials = dict(materials)
        self.settings = settings
        self.bcs = list(bcs)
        self.frame = frame
        self.bodies = list(bodies)
        if self.bodies and frame is None:
            raise InvalidConfigError("rigid bodies need a truss frame")
        for b in self.bodies:
            xM, xD = frame.x[b.driver_nodes[0]], frame.x[b.driver_nodes[1]]
            if b.A is None:
                b.calibrate(xM, xD)
        self.contact = ContactModel(self.bodies, f_N, f_T) if self.bodies else None
        if frame is not None and not settings.quasi_static and not np.any(frame.a):
            # start from the acceleration of the frame masses without contact
            f0 = frame.f_ext - frame.internal(frame.x)[0]
            with np.errstate(divide="ignore", invalid="ignore"):
                a0 = np.where(frame.mass[:, None] > 0.0, f0 / frame.mass[:, None], 0.0)
            a0 = a0 + np.where(frame.mass[:, None] > 0.0, self.gravity_now(0), 0.0)
            a0[frame.fixed] = 0.0
            frame.a = a0
        self.time = 0.0
        self.step_index = 0
        self.records = []
        self.iteration_log = []  # (step, dt, iteration, residual norm)
        self.last_contact = None
        self.gap_log = []
        self._injected = set()
        for mid in np.unique(points.material) if len(points) else []:
            if int(mid) not in self.materials:
                raise InvalidConfigError(f"no material model for id {mid}")
        if len(points) and np.any(points.E <= 0.0):
            for mid, m in self.materials.items():
                sel = (points.material == mid) & (points.E <= 0.0)
                points.E[sel] = m.E

    # -- helpers -----------------------------------------------------------------
    @property
    def n_frame(self):
        return 0 if self.frame is None else self.frame.n_nodes

    def gravity_now(self, step_index):
        g = np.asarray(self.settings.gravity, dtype=float)
        k = self.settings.gravity_ramp_steps
        if k and step_index < k:
            return g * (step_index + 1) / k
        return g

    def _stress(self, b_trial, J):
        P = len(b_trial)
        be = np.empty((P, 3, 3))
        tau = np.empty((P, 3, 3))
        sig = np.empty((P, 3, 3))
        a = np.empty((P, 9, 9))
        plastic = np.zeros(P, bool)
        for mid, model in self.materials.items():
            sel = np.nonzero(self.points.material == mid)[0]
            if len(sel) == 0:
                continue
            r = model.update(b_trial[sel], J[sel], self.points.E[sel])
            be[sel], tau[sel], sig[sel] = r.be, r.tau, r.sigma
            a[sel] = r.tangent()
            plastic[sel] = r.plastic
        return be, tau, sig, a, plastic

    # -- step set-up, assembly and Newton iterations ---------------------------------------
    def prepare_step(self, dt):
        """Stencils, DOF numbering, mass and stabilisation for one step (constant within it)."""
        s = self.settings
        grid = self.grid
        P = self.points
        nP = len(P)
        c = SimpleNamespace(dt=dt, qs=s.quasi_static, nP=nP, g=self.gravity_now(self.step_index))
        c.cM = 0.0 if c.qs else 1.0 / (s.beta * dt * dt)

        # (a)-(c): stencils, active nodes, mass
        if nP:
            c.st = pts.points_basis(P, grid)
            active = pts.active_nodes(c.st)
        else:
            c.st = None
            active = np.zeros(0, int)
        grid.active_nodes = active
        na = len(active)
        gmap = -np.ones(grid.n_nodes, dtype=np.int64)
        gmap[active] = np.arange(na)
        nf = self.n_frame
        N = 3 * na + 3 * nf
        c.active, c.na, c.gmap, c.nf, c.N = active, na, gmap, nf, N

        fixed = np.zeros(N, bool)
        if na:
            fmask = np.zeros((na, 3), bool)
            for bc in self.bcs:
                fmask |= bc.mask(grid, active)
            fixed[:3 * na] = fmask.ravel()
        if nf:
            fixed[3 * na:] = self.frame.fixed.ravel()
        c.fixed = fixed
        c.free = np.nonzero(~fixed)[0]

        if nP:
            st = c.st
            lnodes = np.where(st.mask, gmap[np.where(st.mask, st.nodes, 0)], -1)
            c.lst = pts.Stencil(lnodes, st.S, st.dS)
            K_sl = lnodes.shape[1]
            Msc = pts.consistent_mass(c.lst, P.mass, na)
            faces = select_ghost_faces(grid, P.x, P.lp, P.mass / P.vol, P.E)
            dM = dK = None
            if len(faces) and (s.stabilise_mass or s.stabilise_stiffness):
                dMg, dKg = stabilisation_matrices(grid, faces, grid.n_nodes, s.gamma_m_scale, s.gamma_k_scale)
                dM = dMg[active][:, active] if s.stabilise_mass else None
                dK = dKg[active][:, active] if s.stabilise_stiffness else None
            c.Ms = Msc + dM if dM is not None else Msc
            c.dK = dK
            # pattern: point blocks, mass (same pairs) and ghost entries
            pr = np.repeat(lnodes, K_sl, axis=1).reshape(nP, K_sl, K_sl)
            pc = np.tile(lnodes, (1, K_sl)).reshape(nP, K_sl, K_sl)
            c.pair_ok = (pr >= 0) & (pc >= 0)
            extra = sp.csr_matrix((na, na))
            if not c.qs:
                extra = extra + c.cM * c.Ms
            if dK is not None:
                extra = extra + dK
            extra = extra.tocoo()
            c.pattern = _Pattern(na, np.concatenate([pr[c.pair_ok], extra.row]),
                                 np.concatenate([pc[c.pair_ok], extra.col]))
            c.extra_blocks = extra.data[:, None, None] * np.eye(3)
            c.J_n = np.linalg.det(P.F)
        else:
            c.Ms = sp.csr_matrix((0, 0))
            c.dK = None

        # nodal velocity and acceleration at t_n
        c.v_n = np.zeros((na, 3))
        c.a_n = np.zeros((na, 3))
        if nP and not c.qs:
            mv, ma = pts.project_momentum(P, c.lst, na)
            try:
                lu = spla.splu(c.Ms.tocsc())
            except RuntimeError as exc:
                raise IllConditioningError("singular stabilised mass matrix", grid.boundary_faces) from exc
            c.v_n = lu.solve(mv)
            c.a_n = lu.solve(ma)
            fm = fixed[:3 * na].reshape(na, 3)
            c.v_n[fm] = 0.0
            c.a_n[fm] = 0.0
        c.fbody = np.zeros((na, 3))
        if nP:
            c.fbody = pts.scatter(c.lst, c.st.S[:, :, None] * P.mass[:, None, None] * c.g, na)

        # frame state; prescribed frame DOFs move with their velocity
        c.w0 = np.zeros((nf, 3))
        if nf:
            c.fx_n = self.frame.x.copy()
            c.fv_n = self.frame.v.copy()
            c.fa_n = self.frame.a.copy()
            c.w0[self.frame.fixed] = (self.frame.velocity * dt)[self.frame.fixed]

        # contact set-up
        c.contact = self.contact is not None and nP > 0
        if c.contact:
            # corners of clipped boundary domains are pulled back onto the grid
            verts = np.clip(P.vertices().reshape(-1, 3), grid.lo, grid.hi)
            self.contact.begin_step(grid, verts, c.fx_n)
            c.E_vertex = np.repeat(P.E, 8)
        return c

    def assemble_system(self, c, u, w, tangent=True):
        """Residual, external-force scale and (optionally) tangent at the iterate (u, w).

        ``u`` holds active-node displacement increments (na, 3) and ``w`` the
        frame node displacements (nf, 3).  Returns a namespace with R, fext,
        K (CSR or None) and the constitutive and contact state.
        """
        s = self.settings
        P = self.points
        na, nf, N = c.na, c.nf, c.N
        out = SimpleNamespace(R=np.zeros(N), fext=np.zeros(N), K=None, cres=None, be=None, sigma=None,
                              plastic=None)
        R, fext = out.R, out.fext
        small_r, small_c, small_v = [], [], []
        if c.nP:
            dF = pts.increment_gradient(c.st, self._scatter_full(u, c.active))
            det = np.linalg.det(dF)
            if np.any(det <= 0.0) or not np.all(np.isfinite(det)):
                bad = np.nonzero(~(det > 0.0))[0]
                raise ElementInversionError(f"det(dF) <= 0 during Newton iterations at {len(bad)} point(s), "
                                            f"first at x = {P.x[bad[0]].round(4).tolist()}")
            b_tr = dF @ P.be @ np.swapaxes(dF, 1, 2)
            out.be, _, out.sigma, atan, out.plastic = self._stress(b_tr, det * c.J_n)
            gx = pts.spatial_gradients(c.st.dS, np.linalg.inv(dF))
            V = det * P.vol
            fint = pts.scatter(c.lst, np.einsum("pij,pkj->pki", out.sigma, gx) * V[:, None, None], na)
            Rg = fint - c.fbody
            if not c.qs:
                _, a1 = newmark_kinematics(u, c.v_n, c.a_n, s.gamma, s.beta, c.dt)
                Rg = Rg + c.Ms @ a1
            if c.dK is not None:
                Rg = Rg + c.dK @ u
            R[:3 * na] = Rg.ravel()
            fext[:3 * na] = c.fbody.ravel()
        fx = None
        if nf:
            fx = c.fx_n + w
            f_int_fr, Kfr = self.frame.internal(fx)
            Rf = f_int_fr - self.frame.f_ext - self.frame.mass[:, None] * c.g
            if not c.qs:
                _, fa1 = newmark_kinematics(w, c.fv_n, c.fa_n, s.gamma, s.beta, c.dt)
                Rf = Rf + self.frame.mass[:, None] * fa1
            R[3 * na:] = Rf.ravel()
            fext[3 * na:] = np.abs(self.frame.f_ext + self.frame.mass[:, None] * c.g).ravel()
            el = self.frame.elements
            edof = 3 * na + np.concatenate([3 * el[:, :1] + np.arange(3), 3 * el[:, 1:] + np.arange(3)], 1)
            small_r.append(np.repeat(edof, 6, axis=1).ravel())
            small_c.append(np.tile(edof, (1, 6)).ravel())
            small_v.append(Kfr.ravel())
            if not c.qs:
                d = 3 * na + np.arange(3 * nf)
                small_r.append(d)
                small_c.append(d)
                small_v.append(c.cM * np.repeat(self.frame.mass, 3))
        if c.contact:
            cres = self.contact.evaluate(self._scatter_full(u, c.active), fx, c.E_vertex, with_tangent=tangent)
            out.cres = cres
            if cres.n:
                ldofs = self._contact_dofs(cres, c.gmap, na)
                ok = ldofs >= 0
                Rc = np.where(ok, cres.R, 0.0)
                np.add.at(R, np.where(ok, ldofs, 0), Rc)
                np.add.at(fext, np.where(ok, ldofs, 0), np.abs(Rc))
                okp = ok[:, :, None] & ok[:, None, :]
                small_r.append(np.broadcast_to(ldofs[:, :, None], cres.K.shape)[okp])
                small_c.append(np.broadcast_to(ldofs[:, None, :], cres.K.shape)[okp])
                small_v.append(cres.K[okp])
        if not tangent:
            return out
        if c.nP:
            blocks = self._point_blocks(gx, atan, V, c.pair_ok)
            K = c.pattern.bsr(np.concatenate([blocks, c.extra_blocks])).tocsr()
            K.resize((N, N))
        else:
            K = sp.csr_matrix((N, N))
        if small_r:
            K = K + sp.coo_matrix((np.concatenate(small_v), (np.concatenate(small_r), np.concatenate(small_c))),
                                  shape=(N, N)).tocsr()
        out.K = K
        return out

    def _attempt(self, dt, inject_nan=False):
        s = self.settings
        c = self.prepare_step(dt)
        na, nf = c.na, c.nf
        u = np.zeros((na, 3))
        w = c.w0.copy()
        history = []
        h_min = min(float(ax.spacing.min()) for ax in self.grid.axes)
        a = self.assemble_system(c, u, w)
        for it in range(s.max_iter + 1):
            R = a.R
            if inject_nan and it == 0:
                R[c.free[:1]] = np.nan
            rn = float(np.linalg.norm(R[c.free]))
            fe = max(float(np.linalg.norm(a.fext)), 1.0)
            history.append(rn)
            self.iteration_log.append((self.step_index, dt, it, rn))
            if not np.isfinite(rn):
                raise NonConvergenceError("non-finite residual", history)
            if rn / fe < s.tol_rel or rn < s.tol_abs:
                break
            if it == s.max_iter:
                raise NonConvergenceError(f"no convergence after {s.max_iter} iterations", history)
            Kff = a.K[c.free][:, c.free].tocsc()
            try:
                du = spla.splu(Kff).solve(-R[c.free])
            except RuntimeError as exc:
                raise IllConditioningError("singular tangent matrix", self.grid.boundary_faces) from exc
            if not np.all(np.isfinite(du)):
                raise NonConvergenceError("non-finite Newton increment", history)
            full = np.zeros(c.N)
            full[c.free] = du
            dug = full[:3 * na].reshape(na, 3)
            dw = full[3 * na:].reshape(nf, 3)
            # damped update: cap the grid increment, back off when points invert
            big = float(np.abs(dug).max(initial=0.0))
            alpha = min(1.0, s.max_increment * h_min / big) if big > 0.0 else 1.0
            for k in range(s.max_backtracks + 1):
                try:
                    a = self.assemble_system(c, u + alpha * dug, w + alpha * dw)
                    break
                except ElementInversionError:
                    if k == s.max_backtracks:
                        raise
                    alpha *= 0.5
            u = u + alpha * dug
            w = w + alpha * dw
        self._finish_step(c, u, w, a)
        return dict(iterations=len(history) - 1, residuals=history)

    def _finish_step(self, c, u, w, a):
        s = self.settings
        P = self.points
        grid = self.grid
        # (e) grid to points
        if c.nP:
            v1, a1 = newmark_kinematics(u, c.v_n, c.a_n, s.gamma, s.beta, c.dt)
            if c.qs:
                v1 = np.zeros_like(u)
                a1 = np.zeros_like(u)
            pts.update_point_from_grid(P, c.st, self._scatter_full(u, c.active), self._scatter_full(v1, c.active),
                                       self._scatter_full(c.v_n, c.active), self._scatter_full(a1, c.active),
                                       a.be, a.sigma)
        if c.nf:
            self.frame.x = c.fx_n + w
            if c.qs:
                self.frame.v = np.zeros_like(w)
                self.frame.a = np.zeros_like(w)
            else:
                self.frame.v, self.frame.a = newmark_kinematics(w, c.fv_n, c.fa_n, s.gamma, s.beta, c.dt)
            self.frame.v[self.frame.fixed] = self.frame.velocity[self.frame.fixed]
        cres = a.cres
        if cres is not None:
            self.contact.commit(cres)
        self.last_contact = cres
        # (f) domain reset and contact gap correction
        if c.nP:
            pts.reset_domain(P)
            if s.gap_correction and cres is not None and cres.n:
                self._correct_gaps(cres)
        grid.reset()

    def _correct_gaps(self, cres):
        P = self.points
        queries = [SurfaceQuery(b.triangle_vertices(self.frame.x[b.driver_nodes[0]], self.frame.x[b.driver_nodes[1]]))
                   for b in self.bodies]
        self.gap_log = []
        owners = np.unique(cres.vid // 8)
        for p in owners:
            for b, q in enumerate(queries):
                sel = (cres.vid // 8 == p) & (cres.body == b)
                if not np.any(sel):
                    continue
                g_old = np.zeros(8)
                g_old[cres.vid[sel] % 8] = np.minimum(cres.gap[sel], 0.0)
                eps = self.contact.f_N * P.E[p]
                x_new, info = minimise_reset_gap(P.x[p], P.lp[p], g_old, eps, eps, q, tol=self.settings.gap_tol)
                info["point"] = int(p)
                info["rejected"] = not bool(self.grid.contains(x_new))
                if not info["rejected"]:
                    P.x[p] = x_new
                self.gap_log.append(info)

    def _scatter_full(self, u_active, active):
        out = np.zeros((self.grid.n_nodes, 3))
        out[active] = u_active
        return out

    def _contact_dofs(self, cres, gmap, na):
        gn = cres.grid_nodes
        li = np.where(gn < len(gmap), gmap[np.minimum(gn, len(gmap) - 1)], -1)
        dofs = np.full((cres.n, 30), -1, dtype=np.int64)
        comp = np.arange(3)
        g = np.where(li[:, :, None] >= 0, 3 * li[:, :, None] + comp, -1)
        dofs[:, :24] = g.reshape(cres.n, 24)
        for b, body in enumerate(self.bodies):
            sel = cres.body == b
            iM, iD = body.driver_nodes
            dofs[sel, 24:27] = 3 * na + 3 * iM + comp
            dofs[sel, 27:30] = 3 * na + 3 * iD + comp
        return dofs

    def _point_blocks(self, gx, atan, V, pair_ok, chunk=256):
        """Stiffness blocks V g_aj a_ijkl g_bl for every valid stencil pair."""
        A4 = atan.reshape(-1, 3, 3, 3, 3)
        out = []
        for s0 in range(0, len(gx), chunk):
            g = gx[s0:s0 + chunk]
            T = np.einsum("paj,pijkl->paikl", g, A4[s0:s0 + chunk], optimize=True)
            B = np.einsum("paikl,pbl->pabik", T, g, optimize=True) * V[s0:s0 + chunk, None, None, None, None]
            out.append(B[pair_ok[s0:s0 + chunk]])
        return np.concatenate(out) if out else np.zeros((0, 3, 3))

    # -- time stepping ------------------------------------------------------------------
    def snapshot(self):
        snap = {"points": self.points.copy(), "time": self.time, "step": self.step_index,
                "history": dict(self.contact.history) if self.contact else None}
        if self.frame is not None:
            snap["frame"] = {k: np.array(v) for k, v in self.frame.state_arrays().items()}
        return snap

    def restore(self, snap):
        self.points.load_state(snap["points"].state_arrays())
        self.time = snap["time"]
        self.step_index = snap["step"]
        if self.contact is not None:
            self.contact.history = dict(snap["history"])
        if self.frame is not None:
            for k, v in snap["frame"].items():
                setattr(self.frame, k, np.array(v))
        self.grid.reset()

    def run_timestep(self, dt=None):
        """Advance one step, halving the increment on failure.

        Returns the StepRecord; the base increment is used again for the next call.
        """
        s = self.settings
        dt0 = s.dt if dt is None else dt
        snap = self.snapshot()
        for depth in range(s.max_halvings + 1):
            dt_try = dt0 / 2 ** depth
            inject = (self.step_index in s.inject_failures and depth == 0
                      and self.step_index not in self._injected)
            try:
                t0 = time.perf_counter()
                res = self._attempt(dt_try, inject_nan=inject)
            except (NonConvergenceError, ElementInversionError, MaterialError, IllConditioningError,
                    OutOfDomainError, np.linalg.LinAlgError) as exc:
                if inject:
                    self._injected.add(self.step_index)
                log.info("step %d failed at dt=%g (%s); halving", self.step_index, dt_try, exc)
                self.restore(snap)
                continue
            rec = StepRecord(self.step_index, self.time + dt_try, dt_try, depth, res["iterations"], res["residuals"])
            rec.wall = time.perf_counter() - t0
            self.time += dt_try
            self.step_index += 1
            self.records.append(rec)
            return rec
        path = self.dump_state(f"abort_step{self.step_index}.npz")
        raise SimulationAbort(f"step {self.step_index} failed after {s.max_halvings} halvings", str(path))

    def run(self, callback=None):
        s = self.settings
        eps = 1e-9 * s.dt
        while self.time < s.t_end - eps:
            dt = min(s.dt, s.t_end - self.time)
            rec = self.run_timestep(dt)
            if callback is not None:
                callback(self, rec)
        return self.records

    # -- diagnostics and checkpoints -------------------------------------------------------
    def total_mass(self):
        m = float(np.sum(self.points.mass)) if len(self.points) else 0.0
        return m

    def dump_state(self, name):
        from pathlib import Path

        path = Path(self.settings.dump_dir) / name
        path.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(self, path)
        return path


def save_checkpoint(sim: Simulation, path):
    data = {"version": CHECKPOINT_VERSION, "time": sim.time, "step": sim.step_index}
    for k, v in sim.points.state_arrays().items():
        data["points_" + k] = v
    if sim.frame is not None:
        for k, v in sim.frame.state_arrays().items():
            data["frame_" + k] = v
    if sim.contact is not None and sim.contact.history:
        keys = sorted(sim.contact.history)
        data["contact_keys"] = np.array(keys, dtype=np.int64)
        data["contact_tri"] = np.array([sim.contact.history[k].tri for k in keys])
        data["contact_xi"] = np.array([sim.contact.history[k].xi for k in keys])
        data["contact_pT"] = np.array([sim.contact.history[k].pT for k in keys])
    np.savez(path, **data)


def load_checkpoint(sim: Simulation, path):
    from .contact import _History

    with np.load(path) as d:
        if int(d["version"]) != CHECKPOINT_VERSION:
            raise InvalidConfigError(f"unsupported checkpoint version {int(d['version'])}")
        sim.time = float(d["time"])
        sim.step_index = int(d["step"])
        sim.points.load_state({k[7:]: d[k] for k in d.files if k.startswith("points_")})
        if sim.frame is not None:
            for k in d.files:
                if k.startswith("frame_"):
                    setattr(sim.frame, k[6:], np.array(d[k]))
        if sim.contact is not None:
            sim.contact.history = {}
            if "contact_keys" in d.files:
                for key, t, xi, p in zip(d["contact_keys"], d["contact_tri"], d["contact_xi"], d["contact_pT"]):
                    sim.contact.history[(int(key[0]), int(key[1]))] = _History(int(t), xi.copy(), p.copy())
