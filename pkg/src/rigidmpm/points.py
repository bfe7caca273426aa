"""GIMP material points: cuboid domains, basis functions and grid transfers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ElementInversionError, InvalidConfigError, OutOfDomainError
from .grid import HEX_SIGNS, BackgroundGrid

_I3 = np.eye(3)


@dataclass
class Stencil:
    """Padded GIMP stencil; unused slots have ``nodes == -1`` and zero weights."""

    nodes: np.ndarray  # (P, K)
    S: np.ndarray  # (P, K)
    dS: np.ndarray  # (P, K, 3)

    @property
    def mask(self):
        return self.nodes >= 0


class MaterialPoints:
    """Structure-of-arrays container for all material points."""

    def __init__(self, x, half_lengths, mass, volume, material=None, E=None):
        self.x = np.array(x, dtype=float).reshape(-1, 3)
        n = len(self.x)
        self.lp = np.array(half_lengths, dtype=float).reshape(n, 3)
        self.lp0 = self.lp.copy()
        self.mass = np.broadcast_to(np.asarray(mass, dtype=float), (n,)).copy()
        self.vol0 = np.broadcast_to(np.asarray(volume, dtype=float), (n,)).copy()
        self.vol = self.vol0.copy()
        if np.any(self.mass <= 0.0) or np.any(self.vol0 <= 0.0) or np.any(self.lp <= 0.0):
            raise InvalidConfigError("material points need positive mass, volume and half-lengths")
        self.F = np.tile(_I3, (n, 1, 1))
        self.be = np.tile(_I3, (n, 1, 1))
        self.sigma = np.zeros((n, 3, 3))
        self.v = np.zeros((n, 3))
        self.a = np.zeros((n, 3))
        self.u = np.zeros((n, 3))  # total displacement, for output only
        self.material = np.zeros(n, dtype=int) if material is None else np.asarray(material, dtype=int).copy()
        self.E = np.zeros(n) if E is None else np.broadcast_to(np.asarray(E, dtype=float), (n,)).copy()

    def __len__(self):
        return len(self.x)

    @property
    def J(self):
        return np.linalg.det(self.F)

    def vertices(self):
        """GIMP domain corners (P, 8, 3); corner c uses the grid local-node ordering."""
        return self.x[:, None, :] + HEX_SIGNS[None, :, :] * self.lp[:, None, :]

    def state_arrays(self):
        return {k: getattr(self, k) for k in
                ("x", "lp", "lp0", "mass", "vol", "vol0", "F", "be", "sigma", "v", "a", "u", "material", "E")}

    def load_state(self, arrays):
        for k, v in arrays.items():
            setattr(self, k, np.array(v))

    def copy(self):
        other = MaterialPoints.__new__(MaterialPoints)
        for k, v in self.state_arrays().items():
            setattr(other, k, np.array(v))
        return other

    def append(self, other):
        for k, v in self.state_arrays().items():
            setattr(self, k, np.concatenate([v, getattr(other, k)]))


def fill_box(grid: BackgroundGrid, lo, hi, ppe, rho, material=0, E=0.0):
    """Points in every grid element lying inside the box [lo, hi].

    ``ppe`` points per direction per element, each with a domain of half-length
    ``h / (2 ppe)`` so the domains tile the elements exactly.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if ppe < 1:
        raise InvalidConfigError("points per element must be >= 1")
    eid = np.arange(grid.n_elements)
    elo = grid.element_lo(eid)
    h = grid.element_size(eid)
    tol = 1e-9 * np.max(h)
    inside = np.all((elo >= lo - tol) & (elo + h <= hi + tol), axis=1)
    if not np.any(inside):
        raise InvalidConfigError(f"no grid element lies inside the box {lo} - {hi}")
    elo, h = elo[inside], h[inside]
    off = (np.arange(ppe) + 0.5) / ppe
    g = np.stack(np.meshgrid(off, off, off, indexing="ij"), -1).reshape(-1, 3)
    g = g[np.lexsort((g[:, 0], g[:, 1], g[:, 2]))]
    x = (elo[:, None, :] + g[None, :, :] * h[:, None, :]).reshape(-1, 3)
    lp = np.repeat(h / (2.0 * ppe), len(g), axis=0)
    vol = np.prod(2.0 * lp, axis=1)
    return MaterialPoints(x, lp, rho * vol, vol, np.full(len(x), material), E)


# -- GIMP basis -----------------------------------------------------------------
def _hat(c, v, x):
    n = c.size
    cv = c[v]
    cl = c[np.maximum(v - 1, 0)]
    cr = c[np.minimum(v + 1, n - 1)]
    has_l = v > 0
    has_r = v < n - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        left = np.where(has_l & (x >= cl) & (x <= cv), (x - cl) / (cv - cl), 0.0)
        right = np.where(has_r & (x > cv) & (x <= cr), (cr - x) / (cr - cv), 0.0)
    left = np.where(~has_l & (x == cv), 1.0, left)
    return left + right


def _hat_integral(c, v, x):
    """Antiderivative of the hat function of node ``v``, zero left of its support."""
    n = c.size
    cv = c[v]
    cl = c[np.maximum(v - 1, 0)]
    cr = c[np.minimum(v + 1, n - 1)]
    hl = cv - cl
    hr = cr - cv
    with np.errstate(divide="ignore", invalid="ignore"):
        tl = np.clip(x, cl, cv) - cl
        phl = np.where(v > 0, tl * tl / (2.0 * np.where(hl > 0, hl, 1.0)), 0.0)
        tr = np.clip(x, cv, cr) - cv
        phr = np.where(v < n - 1, tr - tr * tr / (2.0 * np.where(hr > 0, hr, 1.0)), 0.0)
    return phl + phr


def gimp_1d(coords, x, lp):
    """Per-axis GIMP weights: node indices (P, W), values and derivatives w.r.t. x.

    Unused slots carry index -1.
    """
    c = coords
    n = c.size
    a = x - lp
    b = x + lp
    # domains next to a grid boundary (symmetry planes, fixed walls) may poke
    # through it after a reset; they are truncated there, only a centre
    # outside the grid is an error
    tol = 1e-12 * max(1.0, abs(c[-1]) + abs(c[0]))
    if np.any(x < c[0] - tol) or np.any(x > c[-1] + tol):
        raise OutOfDomainError("material point left the background grid")
    # a clamped end does not move with the point
    # a clamped end does not move with the point; an end resting exactly on
    # the boundary is treated as free (one-sided derivative into the grid)
    da = (a >= c[0] - tol).astype(float)[:, None]
    db = (b <= c[-1] + tol).astype(float)[:, None]
    a = np.maximum(a, c[0])
    b = np.minimum(b, c[-1])
    ia = np.clip(np.searchsorted(c, a, side="right") - 1, 0, n - 2)
    ib = np.clip(np.searchsorted(c, b, side="left") - 1, 0, n - 2)
    ib = np.maximum(ib, ia)
    width = int(np.max(ib - ia)) + 2
    v = ia[:, None] + np.arange(width)[None, :]
    valid = v <= (ib + 1)[:, None]
    vc = np.minimum(v, n - 1)
    span = (b - a)[:, None]
    tiny = span[:, 0] <= 1e-12 * (c[ib + 1] - c[ia])
    with np.errstate(divide="ignore", invalid="ignore"):
        S = (_hat_integral(c, vc, b[:, None]) - _hat_integral(c, vc, a[:, None])) / span
        dS = (db * _hat(c, vc, b[:, None]) - da * _hat(c, vc, a[:, None]) - (db - da) * S) / span
    if np.any(tiny):
        # Dirac limit: ordinary linear shape functions of the containing element
        t = np.nonzero(tiny)[0]
        e = ia[t]
        L = c[e + 1] - c[e]
        xt = x[t]
        v0 = np.stack([e, e + 1], 1)
        vals = np.stack([(c[e + 1] - xt) / L, (xt - c[e]) / L], 1)
        ders = np.stack([-1.0 / L, 1.0 / L], 1)
        S[t] = 0.0
        dS[t] = 0.0
        for k in range(2):
            col = v0[:, k] - ia[t]
            S[t, col] = vals[:, k]
            dS[t, col] = ders[:, k]
        valid[t] = False
        valid[t[:, None], np.stack([v0[:, 0] - ia[t], v0[:, 1] - ia[t]], 1)] = True
    S = np.where(valid, S, 0.0)
    dS = np.where(valid, dS, 0.0)
    return np.where(valid, v, -1), S, dS


def gimp_basis(x, lp, grid: BackgroundGrid, prune=True):
    """Tensor-product GIMP stencil for domains centred at x with half-lengths lp."""
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    lp = np.asarray(lp, dtype=float).reshape(-1, 3)
    parts = [gimp_1d(grid.axes[d].coords, x[:, d], lp[:, d]) for d in range(3)]
    (ix, sx, dx), (iy, sy, dy), (iz, sz, dz) = parts
    P = len(x)
    nx, ny, _ = grid.shape
    I = ix[:, None, None, :]
    Jy = iy[:, None, :, None]
    Kz = iz[:, :, None, None]
    valid = (I >= 0) & (Jy >= 0) & (Kz >= 0)
    nodes = np.where(valid, I + nx * (Jy + ny * Kz), -1).reshape(P, -1)
    SX, SY, SZ = sx[:, None, None, :], sy[:, None, :, None], sz[:, :, None, None]
    DX, DY, DZ = dx[:, None, None, :], dy[:, None, :, None], dz[:, :, None, None]
    S = (SX * SY * SZ).reshape(P, -1)
    dS = np.stack([(DX * SY * SZ).reshape(P, -1),
                   (SX * DY * SZ).reshape(P, -1),
                   (SX * SY * DZ).reshape(P, -1)], -1)
    if prune:
        nodes = np.where((S != 0.0) | np.any(dS != 0.0, axis=-1), nodes, -1)
    return Stencil(nodes, np.where(nodes >= 0, S, 0.0), np.where((nodes >= 0)[..., None], dS, 0.0))


def points_basis(points: MaterialPoints, grid: BackgroundGrid):
    return gimp_basis(points.x, points.lp, grid)


# -- transfers -------------------------------------------------------------------
def active_nodes(stencil: Stencil):
    n = stencil.nodes[stencil.mask]
    return np.unique(n)


def scatter(stencil: Stencil, weights, n_nodes):
    """Sum of weights[p, k, ...] into nodes, output (n_nodes, ...)."""
    m = stencil.mask
    w = np.asarray(weights)[m]
    out = np.zeros((n_nodes,) + w.shape[1:])
    np.add.at(out, stencil.nodes[m], w)
    return out


def gather(stencil: Stencil, nodal):
    """Interpolate nodal values (n_nodes, ...) to points: sum_v S_v f_v."""
    nodal = np.asarray(nodal)
    idx = np.where(stencil.mask, stencil.nodes, 0)
    vals = nodal[idx]
    return np.einsum("pk,pk...->p...", stencil.S, vals)


def gather_gradient(stencil: Stencil, nodal, dS=None):
    """sum_v f_v (x) grad S_v, shape (P, 3, 3) for vector nodal fields."""
    dS = stencil.dS if dS is None else dS
    idx = np.where(stencil.mask, stencil.nodes, 0)
    return np.einsum("pki,pkj->pij", np.asarray(nodal)[idx], dS)


def consistent_mass(stencil: Stencil, mass, n_nodes):
    """Scalar consistent mass matrix M_vw = sum_p m_p S_vp S_wp (CSR)."""
    P, K = stencil.S.shape
    rows = np.repeat(stencil.nodes, K, axis=1).ravel()
    cols = np.tile(stencil.nodes, (1, K)).ravel()
    vals = (mass[:, None, None] * stencil.S[:, :, None] * stencil.S[:, None, :]).ravel()
    keep = (rows >= 0) & (cols >= 0)
    return sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n_nodes, n_nodes)).tocsr()


def map_points_to_grid(points: MaterialPoints, stencil: Stencil, n_nodes, body_accel=(0.0, 0.0, 0.0)):
    """Consistent scalar mass matrix, internal force and body force on the grid.

    Body force density is ``rho * g``, so the nodal body force is
    ``sum_p S_vp m_p g``.
    """
    M = consistent_mass(stencil, points.mass, n_nodes)
    fint = scatter(stencil, np.einsum("pij,pkj->pki", points.sigma, stencil.dS) * points.vol[:, None, None], n_nodes)
    g = np.asarray(body_accel, dtype=float)
    fbody = scatter(stencil, stencil.S[:, :, None] * points.mass[:, None, None] * g, n_nodes)
    return M, fint, fbody


def project_momentum(points: MaterialPoints, stencil: Stencil, n_nodes):
    """Nodal momentum and mass-weighted acceleration sums (right-hand sides of the projection)."""
    mv = scatter(stencil, stencil.S[:, :, None] * (points.mass[:, None] * points.v)[:, None, :], n_nodes)
    ma = scatter(stencil, stencil.S[:, :, None] * (points.mass[:, None] * points.a)[:, None, :], n_nodes)
    return mv, ma


# -- kinematics ------------------------------------------------------------------
def increment_gradient(stencil: Stencil, u_nodes, dSX=None):
    """Deformation gradient increment dF = I + sum_v du_v (x) grad_X S_v."""
    return _I3 + gather_gradient(stencil, u_nodes, dSX)


def spatial_gradients(dSX, dF_inv):
    """grad_x S = grad_X S . dF^-1 for every stencil slot."""
    return np.einsum("pkj,pji->pki", dSX, dF_inv)


def update_point_from_grid(points: MaterialPoints, stencil: Stencil, u_nodes, v_new, v_old, a_new,
                           be_new=None, sigma_new=None):
    """Move points with the converged grid solution (in place).

    ``u_nodes``, ``v_new``, ``v_old``, ``a_new`` are (n_nodes, 3) arrays.
    ``be_new``/``sigma_new`` come from the converged constitutive update;
    when omitted the stress state is left untouched.
    """
    dF = increment_gradient(stencil, u_nodes)
    det = np.linalg.det(dF)
    if np.any(det <= 0.0) or not np.all(np.isfinite(det)):
        raise ElementInversionError("deformation increment has det(dF) <= 0")
    du = gather(stencil, u_nodes)
    points.F = dF @ points.F
    points.vol = np.linalg.det(points.F) * points.vol0
    points.x = points.x + du
    points.u = points.u + du
    points.v = points.v + gather(stencil, np.asarray(v_new) - np.asarray(v_old))
    points.a = gather(stencil, a_new)
    if be_new is not None:
        points.be = np.array(be_new)
    if sigma_new is not None:
        points.sigma = np.array(sigma_new)
    return dF


def reset_domain(points: MaterialPoints):
    """Axis-aligned domains from the diagonal of the right stretch tensor.

    Half-lengths ``l0_i U_ii`` are rescaled so that ``8 prod(l) = V``.
    """
    C = np.einsum("pki,pkj->pij", points.F, points.F)
    lam, vec = np.linalg.eigh(C)
    U = np.einsum("pia,pa,pja->pij", vec, np.sqrt(np.maximum(lam, 0.0)), vec)
    l = points.lp0 * np.diagonal(U, axis1=1, axis2=2)
    scale = (points.vol / (8.0 * np.prod(l, axis=1))) ** (1.0 / 3.0)
    points.lp = l * scale[:, None]
    return points.lp
