"""Ghost-penalty stabilisation on faces next to partially filled elements.

For a face between elements e- and e+ with unit normal n (pointing from e-
to e+) the scalar block

    J_G = h_f^3 / 3 * int_face G G^T dA,   G = [n . grad N+, -n . grad N-]

penalises jumps of the normal derivative.  It vanishes for any field that is
affine across both elements.  Vector problems use ``J_G (x) I3``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import BackgroundGrid, hex_shape

FULL_TOL = 1e-6
_GAUSS = np.array([-1.0, 1.0]) / np.sqrt(3.0)


@dataclass
class GhostFaces:
    minus: np.ndarray  # (F,) element ids
    plus: np.ndarray
    axis: np.ndarray
    rho: np.ndarray  # volume-weighted density over both elements
    E: np.ndarray  # volume-weighted Young's modulus

    def __len__(self):
        return len(self.minus)


def element_coverage(x, lp, grid: BackgroundGrid, rho=None, E=None):
    """Fraction of every element covered by GIMP domains.

    Also returns the covered-volume-weighted averages of ``rho`` and ``E``
    (zeros where an element is empty).
    """
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    lp = np.asarray(lp, dtype=float).reshape(-1, 3)
    P = len(x)
    rho = np.zeros(P) if rho is None else np.broadcast_to(np.asarray(rho, float), (P,))
    E = np.zeros(P) if E is None else np.broadcast_to(np.asarray(E, float), (P,))
    per_axis = []
    for d in range(3):
        c = grid.axes[d].coords
        a = np.maximum(x[:, d] - lp[:, d], c[0])
        b = np.minimum(x[:, d] + lp[:, d], c[-1])
        ia = np.clip(np.searchsorted(c, a, side="right") - 1, 0, c.size - 2)
        ib = np.clip(np.searchsorted(c, b, side="left") - 1, 0, c.size - 2)
        ib = np.maximum(ib, ia)
        w = int(np.max(ib - ia)) + 1
        e = ia[:, None] + np.arange(w)
        ec = np.minimum(e, c.size - 2)
        ov = np.maximum(0.0, np.minimum(b[:, None], c[ec + 1]) - np.maximum(a[:, None], c[ec]))
        ov = np.where(e <= ib[:, None], ov, 0.0)
        per_axis.append((ec, ov))
    (ex, ox), (ey, oy), (ez, oz) = per_axis
    eid = grid.element_id(np.stack(np.broadcast_arrays(ex[:, None, None, :], ey[:, None, :, None],
                                                       ez[:, :, None, None]), -1))
    vol = ox[:, None, None, :] * oy[:, None, :, None] * oz[:, :, None, None]
    eid = eid.reshape(P, -1)
    vol = vol.reshape(P, -1)
    n = grid.n_elements
    covered = np.bincount(eid.ravel(), vol.ravel(), minlength=n)
    rho_sum = np.bincount(eid.ravel(), (vol * rho[:, None]).ravel(), minlength=n)
    E_sum = np.bincount(eid.ravel(), (vol * E[:, None]).ravel(), minlength=n)
    evol = np.prod(grid.element_size(np.arange(n)), axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho_avg = np.where(covered > 0, rho_sum / covered, 0.0)
        E_avg = np.where(covered > 0, E_sum / covered, 0.0)
    return covered / evol, rho_avg, E_avg, covered


def select_ghost_faces(grid: BackgroundGrid, x, lp, rho=None, E=None):
    """Faces between two occupied elements where at least one is partially filled."""
    cov, rho_avg, E_avg, vol = element_coverage(x, lp, grid, rho, E)
    em, ep, ax = grid.interior_faces()
    occupied = (cov[em] > 0.0) & (cov[ep] > 0.0)
    partial = (cov[em] < 1.0 - FULL_TOL) | (cov[ep] < 1.0 - FULL_TOL)
    keep = occupied & partial
    em, ep, ax = em[keep], ep[keep], ax[keep]
    w = vol[em] + vol[ep]
    rho_f = (rho_avg[em] * vol[em] + rho_avg[ep] * vol[ep]) / w
    E_f = (E_avg[em] * vol[em] + E_avg[ep] * vol[ep]) / w
    faces = GhostFaces(em, ep, ax, rho_f, E_f)
    grid.boundary_faces = list(zip(em.tolist(), ep.tolist()))
    return faces


def ghost_matrix(grid: BackgroundGrid, e_minus, e_plus, axis):
    """Node ids (16,) and scalar block J_G (16, 16) for one face."""
    nodes, J = ghost_blocks(grid, GhostFaces(np.atleast_1d(e_minus), np.atleast_1d(e_plus),
                                             np.atleast_1d(axis), np.zeros(1), np.zeros(1)))
    return nodes[0], J[0]


def ghost_blocks(grid: BackgroundGrid, faces: GhostFaces):
    """Vectorised face blocks: nodes (F, 16) and J_G (F, 16, 16)."""
    F = len(faces)
    if F == 0:
        return np.zeros((0, 16), int), np.zeros((0, 16, 16))
    hm = grid.element_size(faces.minus)
    hp = grid.element_size(faces.plus)
    J = np.zeros((F, 16, 16))
    nodes = np.concatenate([grid.element_nodes(faces.plus), grid.element_nodes(faces.minus)], axis=1)
    for d in range(3):
        sel = np.nonzero(faces.axis == d)[0]
        if len(sel) == 0:
            continue
        o1, o2 = [k for k in range(3) if k != d]
        face_h = hm[sel][:, [o1, o2]]
        hf = face_h.max(axis=1)
        area = face_h.prod(axis=1)
        for g1 in _GAUSS:
            for g2 in _GAUSS:
                lm = np.zeros((len(sel), 3))
                lm[:, d] = 1.0
                lm[:, o1] = g1
                lm[:, o2] = g2
                lpl = lm.copy()
                lpl[:, d] = -1.0
                _, dNm = hex_shape(lm, hm[sel])
                _, dNp = hex_shape(lpl, hp[sel])
                G = np.concatenate([dNp[:, :, d], -dNm[:, :, d]], axis=1)
                # Gauss weights are 1; the face Jacobian is area / 4
                J[sel] += (area / 4.0)[:, None, None] * np.einsum("fi,fj->fij", G, G)
        J[sel] *= (hf ** 3 / 3.0)[:, None, None]
    return nodes, J


def stabilisation_matrices(grid: BackgroundGrid, faces: GhostFaces, n_nodes, gamma_m_scale=1.0,
                           gamma_k_scale=1.0):
    """Scalar node-level additions (dM, dK) as CSR matrices.

    gamma_M = rho / 4 and gamma_K = E / 30 (scaled by the config factors);
    the stiffness block is divided by the squared element size normal to the face.
    """
    nodes, J = ghost_blocks(grid, faces)
    if len(faces) == 0:
        z = sp.csr_matrix((n_nodes, n_nodes))
        return z, z.copy()
    h = 0.5 * (grid.element_size(faces.minus)[np.arange(len(faces)), faces.axis]
               + grid.element_size(faces.plus)[np.arange(len(faces)), faces.axis])
    gm = gamma_m_scale * faces.rho / 4.0
    gk = gamma_k_scale * faces.E / 30.0 / h ** 2
    rows = np.repeat(nodes, 16, axis=1).ravel()
    cols = np.tile(nodes, (1, 16)).ravel()
    dM = sp.coo_matrix(((gm[:, None, None] * J).ravel(), (rows, cols)), shape=(n_nodes, n_nodes)).tocsr()
    dK = sp.coo_matrix(((gk[:, None, None] * J).ravel(), (rows, cols)), shape=(n_nodes, n_nodes)).tocsr()
    return dM, dK


def apply_stabilisation(M, K, dM, dK):
    return M + dM, K + dK
