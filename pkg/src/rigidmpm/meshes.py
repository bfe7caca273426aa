"""Triangle surface meshes: STL/OBJ input, STL output and simple generators."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidMeshError


@dataclass
class TriMesh:
    vertices: np.ndarray  # (n, 3)
    triangles: np.ndarray  # (t, 3) int

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=int).reshape(-1, 3)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise InvalidMeshError("triangle index out of range")

    @property
    def bbox_size(self):
        return float(np.linalg.norm(np.ptp(self.vertices, axis=0)))

    def normals(self):
        v = self.vertices[self.triangles]
        n = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def areas(self):
        v = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    def signed_volume(self):
        v = self.vertices[self.triangles]
        return float(np.einsum("ti,ti->t", v[:, 0], np.cross(v[:, 1], v[:, 2])).sum() / 6.0)

    def translated(self, d):
        return TriMesh(self.vertices + np.asarray(d, dtype=float), self.triangles.copy())

    def scaled(self, s):
        return TriMesh(self.vertices * s, self.triangles.copy())


def weld(points, tol):
    """Merge points closer than ``tol``; returns (unique points, inverse index)."""
    from scipy.spatial import cKDTree

    points = np.asarray(points, dtype=float)
    tree = cKDTree(points)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    parent = np.arange(len(points))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(len(points))])
    uniq, inv = np.unique(roots, return_inverse=True)
    return points[uniq], inv


def from_soup(tri_vertices, tol_rel=1e-9):
    """Build an indexed mesh from a (t, 3, 3) triangle soup, welding duplicates."""
    soup = np.asarray(tri_vertices, dtype=float).reshape(-1, 3)
    if len(soup) == 0:
        raise InvalidMeshError("mesh has no triangles")
    size = float(np.linalg.norm(np.ptp(soup, axis=0)))
    verts, inv = weld(soup, tol_rel * max(size, 1e-300))
    return TriMesh(verts, inv.reshape(-1, 3))


def read_stl(path):
    data = Path(path).read_bytes()
    if len(data) >= 84:
        n = struct.unpack("<I", data[80:84])[0]
        if 84 + 50 * n == len(data):
            rec = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
            arr = np.frombuffer(data, dtype=rec, count=n, offset=84)
            return from_soup(arr["v"].astype(float))
    text = data.decode("ascii", errors="replace")
    verts = [list(map(float, line.split()[1:4])) for line in text.splitlines()
             if line.strip().startswith("vertex")]
    if not verts or len(verts) % 3:
        raise InvalidMeshError(f"{path}: not a readable STL file")
    return from_soup(np.array(verts).reshape(-1, 3, 3))


def read_obj(path):
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(t) for t in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(t.split("/")[0]) for t in parts[1:]]
            idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
            for k in range(1, len(idx) - 1):  # fan triangulation of polygons
                faces.append([idx[0], idx[k], idx[k + 1]])
    if not faces:
        raise InvalidMeshError(f"{path}: no faces")
    verts = np.array(verts)
    return from_soup(verts[np.array(faces)])


def read_mesh(path):
    suffix = Path(path).suffix.lower()
    if suffix == ".stl":
        return read_stl(path)
    if suffix == ".obj":
        return read_obj(path)
    raise InvalidMeshError(f"unsupported mesh format: {suffix}")


def write_stl(path, mesh: TriMesh, name="body"):
    """ASCII STL."""
    v = mesh.vertices[mesh.triangles]
    nrm = mesh.normals()
    lines = [f"solid {name}"]
    for t in range(len(v)):
        lines.append("  facet normal {:.9e} {:.9e} {:.9e}".format(*nrm[t]))
        lines.append("    outer loop")
        for k in range(3):
            lines.append("      vertex {:.9e} {:.9e} {:.9e}".format(*v[t, k]))
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append(f"endsolid {name}")
    Path(path).write_text("\n".join(lines) + "\n")


def validate_mesh(mesh: TriMesh, closed=None):
    """Reject degenerate triangles and inconsistent winding.

    Each directed edge may appear at most once; for a closed mesh every edge
    must appear once in each direction and the enclosed volume be positive
    (outward normals).
    """
    if np.any(mesh.areas() <= 1e-14 * max(mesh.bbox_size, 1e-300) ** 2):
        raise InvalidMeshError("degenerate (zero-area) triangle")
    tri = mesh.triangles
    directed = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    uniq, counts = np.unique(directed, axis=0, return_counts=True)
    if np.any(counts > 1):
        raise InvalidMeshError("inconsistent triangle orientation (repeated directed edge)")
    keys = set(map(tuple, uniq))
    boundary = sum(1 for a, b in keys if (b, a) not in keys)
    is_closed = boundary == 0
    if closed is True and not is_closed:
        raise InvalidMeshError("mesh is not closed")
    if is_closed and mesh.signed_volume() <= 0.0:
        raise InvalidMeshError("closed mesh normals point inwards")
    return is_closed


# -- generators --------------------------------------------------------------------
def box_mesh(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    c = np.array([[a & 1, (a >> 1) & 1, (a >> 2) & 1] for a in range(8)], dtype=float)
    verts = lo + c * (hi - lo)
    quads = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]
    tris = []
    for a, b, cc, d in quads:
        tris += [(a, b, cc), (a, cc, d)]
    return TriMesh(verts, np.array(tris))


def icosphere(radius=1.0, subdivisions=2, center=(0.0, 0.0, 0.0)):
    """Geodesic sphere with 20 * 4**subdivisions triangles."""
    p = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [(-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0), (0, -1, p), (0, 1, p),
             (0, -1, -p), (0, 1, -p), (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return TriMesh(np.array(verts) * radius + np.asarray(center, dtype=float), np.array(faces))


def latlong_sphere(radius=1.0, n_lat=11, n_lon=16, center=(0.0, 0.0, 0.0), axis="z", phase=0.0):
    """UV sphere with 2 * n_lon * (n_lat - 1) triangles (n_lat rings incl. poles).

    ``axis="y"`` puts the poles on the y axis so the sphere rolls in the x-z
    plane over its n_lon-sided equator; ``phase`` rotates the meridians by a
    fraction of a segment (0.5 with axis="y" and n_lon divisible by 4 leaves
    a flat facet at the bottom).
    """
    verts = [(0.0, 0.0, 1.0)]
    for i in range(1, n_lat):
        th = math.pi * i / n_lat
        for j in range(n_lon):
            ph = 2.0 * math.pi * (j + phase) / n_lon
            verts.append((math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)))
    verts.append((0.0, 0.0, -1.0))
    south = len(verts) - 1

    def ring(i, j):
        return 1 + (i - 1) * n_lon + (j % n_lon)

    faces = []
    for j in range(n_lon):
        faces.append((0, ring(1, j), ring(1, j + 1)))
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces += [(a, c, d), (a, d, b)]
    for j in range(n_lon):
        faces.append((south, ring(n_lat - 1, j + 1), ring(n_lat - 1, j)))
    v = np.array(verts)
    if axis == "y":
        v = np.stack([v[:, 0], -v[:, 2], v[:, 1]], 1)  # rotation about x, keeps orientation
    elif axis != "z":
        raise InvalidMeshError(f"unsupported sphere axis {axis!r}")
    return TriMesh(v * radius + np.asarray(center, dtype=float), np.array(faces))


def cone_mesh(radius, apex_angle_deg=60.0, shaft_length=0.5, n_seg=24, tip=(0.0, 0.0, 0.0),
              phase=0.5):
    """Closed cone penetrometer: tip pointing down (-z), cylindrical shaft above.

    ``phase`` rotates the facets by a fraction of a segment so that no edge
    lies on the x = 0 or y = 0 planes (symmetry planes of quarter models).
    """
    half = math.radians(apex_angle_deg) / 2.0
    h_cone = radius / math.tan(half)
    tip = np.asarray(tip, dtype=float)
    ang = 2.0 * math.pi * (np.arange(n_seg) + phase) / n_seg
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(n_seg)], 1)
    verts = [tip]
    verts += list(ring + tip + [0, 0, h_cone])
    verts += list(ring + tip + [0, 0, h_cone + shaft_length])
    verts.append(tip + [0, 0, h_cone + shaft_length])
    top = len(verts) - 1
    faces = []
    for j in range(n_seg):
        a, b = 1 + j, 1 + (j + 1) % n_seg
        c, d = a + n_seg, b + n_seg
        faces.append((0, b, a))
        faces += [(a, b, d), (a, d, c)]
        faces.append((top, c, d))
    return TriMesh(np.array(verts), np.array(faces))
