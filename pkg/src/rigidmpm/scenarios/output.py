"""Result writers: VTK legacy point clouds, CSV histories, STL snapshots, JSON summary."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..meshes import TriMesh, write_stl


def _fmt(a):
    return " ".join(f"{v:.10e}" for v in np.ravel(a))


def write_vtk_points(path, points, title="material points"):
    """ASCII legacy unstructured grid with one VERTEX cell per point."""
    n = len(points)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    lines += [_fmt(x) for x in points.x]
    lines.append(f"CELLS {n} {2 * n}")
    lines += [f"1 {i}" for i in range(n)]
    lines.append(f"CELL_TYPES {n}")
    lines += ["1"] * n
    lines.append(f"POINT_DATA {n}")
    lines.append("VECTORS displacement double")
    lines += [_fmt(u) for u in points.u]
    lines.append("VECTORS velocity double")
    lines += [_fmt(v) for v in points.v]
    lines.append("TENSORS stress double")
    for s in points.sigma:
        lines += [_fmt(r) for r in s]
    lines.append("SCALARS detF double 1")
    lines.append("LOOKUP_TABLE default")
    lines += [f"{j:.10e}" for j in np.linalg.det(points.F)] if n else []
    lines.append("SCALARS material int 1")
    lines.append("LOOKUP_TABLE default")
    lines += [str(int(m)) for m in points.material]
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk_points(path):
    """Point coordinates back from a file written by write_vtk_points."""
    lines = Path(path).read_text().splitlines()
    i = next(k for k, l in enumerate(lines) if l.startswith("POINTS"))
    n = int(lines[i].split()[1])
    return np.array([[float(v) for v in lines[i + 1 + k].split()] for k in range(n)]).reshape(n, 3)


def write_body_stl(path, body, xM, xD):
    write_stl(path, TriMesh(body.node_positions(xM, xD), body.mesh.triangles), name=body.name)


class CsvLog:
    """RFC-4180 CSV with a fixed header; rows are appended and flushed."""

    def __init__(self, path, header):
        self.path = Path(path)
        self.header = list(header)
        self._fh = open(self.path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\r\n")
        self._w.writerow(self.header)

    def write(self, row):
        self._w.writerow([_cell(v) for v in row])
        self._fh.flush()

    def close(self):
        self._fh.close()


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return v


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_summary(path, summary):
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"not serialisable: {type(o)}")
