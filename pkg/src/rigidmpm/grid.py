"""Tensor-product background grid of 8-node linear hexahedra.

Nodes and elements are numbered lexicographically with the x index running
fastest, so node ``(i, j, k)`` has id ``i + nx * (j + ny * k)``.  Local node
``a`` of an element sits at corner ``(a & 1, (a >> 1) & 1, (a >> 2) & 1)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfigError, OutOfDomainError

# corner offsets of the 8 local nodes, x fastest
HEX_CORNERS = np.array([[a & 1, (a >> 1) & 1, (a >> 2) & 1] for a in range(8)])
HEX_SIGNS = 2.0 * HEX_CORNERS - 1.0


@dataclass(frozen=True)
class GridAxis:
    """Node coordinates along one axis (strictly increasing, >= 2 nodes)."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.ndim != 1 or c.size < 2:
            raise InvalidConfigError("a grid axis needs at least 2 nodes")
        if not np.all(np.isfinite(c)):
            raise InvalidConfigError("grid axis coordinates must be finite")
        if np.any(np.diff(c) <= 0.0):
            raise InvalidConfigError("grid axis coordinates must be strictly increasing")
        object.__setattr__(self, "coords", c)

    @property
    def n_nodes(self):
        return self.coords.size

    @property
    def spacing(self):
        return np.diff(self.coords)


def uniform_axis(lo, hi, dx):
    n = int(round((hi - lo) / dx))
    if n < 1 or not math.isclose(lo + n * dx, hi, rel_tol=1e-9, abs_tol=1e-12):
        raise InvalidConfigError(f"extent [{lo}, {hi}] is not a multiple of dx={dx}")
    return GridAxis(lo + dx * np.arange(n + 1))


def build_graded_axis(dx0, extent_uniform, extent_total, exponent, origin=0.0):
    """Uniform spacing ``dx0`` then power-law spacing ``dx_{i+1} = dx_i**exponent``.

    The uniform region is rounded up to a whole number of ``dx0`` intervals.
    Once the series passes ``extent_total`` the node nearest to the end is
    snapped onto it and everything beyond is dropped.
    """
    vals = (dx0, extent_uniform, extent_total, exponent, origin)
    if not all(math.isfinite(v) for v in vals):
        raise InvalidConfigError("graded axis inputs must be finite")
    if dx0 <= 0.0 or exponent < 1.0:
        raise InvalidConfigError("graded axis needs dx0 > 0 and exponent >= 1")
    if not (extent_total >= extent_uniform > 0.0):
        raise InvalidConfigError("graded axis needs extent_total >= extent_uniform > 0")

    n_uni = max(1, math.ceil(extent_uniform / dx0 - 1e-9))
    nodes = [k * dx0 for k in range(n_uni + 1)]
    tol = 1e-12 * max(extent_total, dx0)
    dx = dx0
    while nodes[-1] < extent_total - tol:
        dx = dx ** exponent
        if dx < 1e-9 * extent_total or len(nodes) > 100000:
            raise InvalidConfigError(
                f"power-law spacing from dx0={dx0} with exponent {exponent} "
                f"cannot reach extent {extent_total}")
        nodes.append(nodes[-1] + dx)

    last = nodes[-1]
    if len(nodes) > 2 and abs(nodes[-2] - extent_total) < abs(last - extent_total):
        nodes.pop()
    nodes[-1] = extent_total
    return GridAxis(origin + np.asarray(nodes))


def hex_shape(local, h):
    """Trilinear values and global gradients.

    ``local`` has shape (..., 3) in [-1, 1]^3, ``h`` the element side lengths
    (broadcastable to (..., 3)).  Returns ``N`` (..., 8) and ``dN`` (..., 8, 3).
    """
    local = np.asarray(local, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), local.shape)
    f = 1.0 + local[..., None, :] * HEX_SIGNS  # (..., 8, 3)
    N = 0.125 * f[..., 0] * f[..., 1] * f[..., 2]
    dN = np.empty(f.shape)
    dN[..., 0] = 0.125 * HEX_SIGNS[:, 0] * f[..., 1] * f[..., 2]
    dN[..., 1] = 0.125 * HEX_SIGNS[:, 1] * f[..., 0] * f[..., 2]
    dN[..., 2] = 0.125 * HEX_SIGNS[:, 2] * f[..., 0] * f[..., 1]
    dN *= 2.0 / h[..., None, :]
    return N, dN


def shape_values_hex(local, h=(2.0, 2.0, 2.0)):
    return hex_shape(local, h)


@dataclass
class BackgroundGrid:
    axes: tuple
    active_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    boundary_faces: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.axes) != 3:
            raise InvalidConfigError("background grid needs exactly 3 axes")
        self.axes = tuple(a if isinstance(a, GridAxis) else GridAxis(a) for a in self.axes)
        self.shape = tuple(a.n_nodes for a in self.axes)
        self.eshape = tuple(n - 1 for n in self.shape)
        self.lo = np.array([a.coords[0] for a in self.axes])
        self.hi = np.array([a.coords[-1] for a in self.axes])

    @property
    def n_nodes(self):
        return self.shape[0] * self.shape[1] * self.shape[2]

    @property
    def n_elements(self):
        return self.eshape[0] * self.eshape[1] * self.eshape[2]

    def reset(self):
        self.active_nodes = np.zeros(0, dtype=int)
        self.boundary_faces = []

    # -- numbering ---------------------------------------------------------
    def node_id(self, ijk):
        ijk = np.asarray(ijk)
        nx, ny, _ = self.shape
        return ijk[..., 0] + nx * (ijk[..., 1] + ny * ijk[..., 2])

    def node_ijk(self, nid):
        nid = np.asarray(nid)
        nx, ny, _ = self.shape
        return np.stack([nid % nx, (nid // nx) % ny, nid // (nx * ny)], axis=-1)

    def element_id(self, ijk):
        ijk = np.asarray(ijk)
        ex, ey, _ = self.eshape
        return ijk[..., 0] + ex * (ijk[..., 1] + ey * ijk[..., 2])

    def element_ijk(self, eid):
        eid = np.asarray(eid)
        ex, ey, _ = self.eshape
        return np.stack([eid % ex, (eid // ex) % ey, eid // (ex * ey)], axis=-1)

    def node_coords(self, nid=None):
        if nid is None:
            nid = np.arange(self.n_nodes)
        ijk = self.node_ijk(nid)
        return np.stack([self.axes[d].coords[ijk[..., d]] for d in range(3)], axis=-1)

    def element_nodes(self, eid):
        ijk = self.element_ijk(eid)
        return self.node_id(ijk[..., None, :] + HEX_CORNERS)

    def element_size(self, eid):
        ijk = self.element_ijk(eid)
        return np.stack([self.axes[d].spacing[ijk[..., d]] for d in range(3)], axis=-1)

    def element_lo(self, eid):
        ijk = self.element_ijk(eid)
        return np.stack([self.axes[d].coords[ijk[..., d]] for d in range(3)], axis=-1)

    # -- point location ----------------------------------------------------
    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo - tol) & (x <= self.hi + tol), axis=-1)

    def locate_element(self, x):
        """Containing element id and trilinear local coordinates.

        Points on a face shared by two elements go to the lower-index one.
        Round-off excursions up to 1e-10 of the grid extent are accepted.
        """
        x = np.asarray(x, dtype=float)
        if not np.all(self.contains(x, tol=1e-10 * float(np.max(self.hi - self.lo)))):
            raise OutOfDomainError(f"position outside grid bounds {self.lo} - {self.hi}")
        ijk = np.empty(x.shape, dtype=int)
        local = np.empty(x.shape)
        for d, ax in enumerate(self.axes):
            c = ax.coords
            i = np.clip(np.searchsorted(c, x[..., d], side="left") - 1, 0, c.size - 2)
            ijk[..., d] = i
            local[..., d] = 2.0 * (x[..., d] - c[i]) / (c[i + 1] - c[i]) - 1.0
        return self.element_id(ijk), local

    def shape_at(self, x):
        """Element nodes (..., 8), values (..., 8) and gradients (..., 8, 3) at x."""
        eid, local = self.locate_element(x)
        N, dN = hex_shape(local, self.element_size(eid))
        return self.element_nodes(eid), N, dN

    # -- faces ---------------------------------------------------------------
    def interior_faces(self):
        """All element pairs sharing a face: arrays (e_minus, e_plus, axis)."""
        em, ep, ax = [], [], []
        grid = np.stack(np.meshgrid(*[np.arange(n) for n in self.eshape], indexing="ij"), -1)
        for d in range(3):
            lo = [slice(None)] * 3
            lo[d] = slice(0, self.eshape[d] - 1)
            ijk = grid[tuple(lo)].reshape(-1, 3)
            if ijk.size == 0:
                continue
            nb = ijk.copy()
            nb[:, d] += 1
            em.append(self.element_id(ijk))
            ep.append(self.element_id(nb))
            ax.append(np.full(len(ijk), d))
        if not em:
            z = np.zeros(0, dtype=int)
            return z, z, z
        return np.concatenate(em), np.concatenate(ep), np.concatenate(ax)

    def nodes_on_plane(self, axis, value, tol=1e-9):
        """Node ids whose ``axis`` coordinate equals ``value``."""
        c = self.axes[axis].coords
        hits = np.nonzero(np.abs(c - value) <= tol * max(1.0, abs(value)))[0]
        if hits.size == 0:
            return np.zeros(0, dtype=int)
        rng = [np.arange(n) for n in self.shape]
        rng[axis] = hits
        g = np.stack(np.meshgrid(*rng, indexing="ij"), -1).reshape(-1, 3)
        return np.sort(self.node_id(g))
