"""CSV tables and legacy-VTK field files."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .fem import FunctionSpace
from .mesh import Mesh


def format_value(v) -> str:
    """Floats with 17 significant digits (exact round trip); others via ``str``."""
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return ""
        return f"{v:.17g}"
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(rows, path, columns=None) -> Path:
    """Write a list of dicts with a header row; missing cells stay empty."""
    rows = list(rows)
    if columns is None:
        columns = []
        for r in rows:
            columns += [k for k in r if k not in columns]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([format_value(r.get(c)) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    """Inverse of :func:`write_csv`; numeric cells become floats, empty cells ``None``."""
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            rec = {}
            for k, v in row.items():
                if v == "":
                    rec[k] = None
                    continue
                try:
                    rec[k] = float(v)
                except ValueError:
                    rec[k] = v
            out.append(rec)
    return out


def vertex_values(space: FunctionSpace, coeffs) -> np.ndarray:
    """Restrict a Lagrange field to mesh vertices (vertex nodes come first).

    Higher-degree fields are thereby down-sampled to their vertex values.
    Returns shape ``(V,)`` for scalars and ``(V, c)`` for vector fields.
    """
    nv = space.mesh.num_vertices
    c = space.components
    arr = np.asarray(coeffs, dtype=float)[: nv * c]
    return arr if c == 1 else arr.reshape(nv, c)


def write_vtk(mesh: Mesh, fields: dict, path, title: str = "mpet fields") -> Path:
    """Legacy ASCII VTK unstructured grid with triangle cells and point data.

    ``fields`` maps names to vertex arrays of shape ``(V,)`` (scalars) or
    ``(V, 2)`` (vectors, written with a zero third component).
    """
    nv, nt = mesh.num_vertices, mesh.num_triangles
    lines = [
        "# vtk DataFile Version 2.0",
        title[:255],
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} double",
    ]
    lines += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    if fields:
        lines.append(f"POINT_DATA {nv}")
    for name, values in fields.items():
        vals = np.asarray(values, dtype=float)
        key = str(name).replace(" ", "_")
        if vals.shape == (nv,):
            lines += [f"SCALARS {key} double 1", "LOOKUP_TABLE default"]
            lines += [f"{v:.17g}" for v in vals]
        elif vals.shape == (nv, 2):
            lines.append(f"VECTORS {key} double")
            lines += [f"{a:.17g} {b:.17g} 0" for a, b in vals]
        else:
            raise ValueError(f"field {name!r} has shape {vals.shape}, expected ({nv},) or ({nv}, 2)")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def state_fields(disc, state) -> dict:
    """Vertex samples of ``u``, ``xi`` and every network pressure of a state."""
    out = {"u": vertex_values(disc.V, state.u), "xi": vertex_values(disc.W, state.xi)}
    for j in range(disc.A):
        out[f"p{j + 1}"] = vertex_values(disc.Q, state.p[j])
    return out
