"""Legacy ASCII VTK output of polygonal meshes with vertex and cell fields."""
from __future__ import annotations

import numpy as np

from .mesh import PolygonalMesh, mesh_batches


def cell_vectors_from_tangential(values: np.ndarray, mesh: PolygonalMesh) -> np.ndarray:
    """Per-cell vector whose tangential components best match the per-edge
    values in the least-squares sense (visualisation only)."""
    out = np.zeros((mesh.n_cells, 2))
    offsets = mesh.cell_offsets
    for ids, conn, g in mesh_batches(mesh):
        m = g.m
        d = values[offsets[ids][:, None] + np.arange(m)]          # (nc, m)
        T = g.t                                                    # (nc, m, 2)
        G = np.swapaxes(T, 1, 2) @ T
        rhs = np.einsum("cmk,cm->ck", T, d)
        out[ids] = np.linalg.solve(G, rhs[..., None])[..., 0]
    return out


def _vec3(a):
    a = np.asarray(a, dtype=float)
    return np.column_stack([a, np.zeros(len(a))]) if a.shape[1] == 2 else a


def write_vtk(path, mesh: PolygonalMesh, point_data=None, cell_data=None, title="mfdplate"):
    """Write POLYDATA with polygon cells.  Field arrays of shape (n,) are
    written as scalars and (n, 2) as vectors (zero z component)."""
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET POLYDATA",
             f"POINTS {mesh.n_vertices} double"]
    lines += [f"{x!r} {y!r} 0.0" for x, y in mesh.vertices]
    size = sum(len(c) + 1 for c in mesh.cells)
    lines.append(f"POLYGONS {mesh.n_cells} {size}")
    lines += [f"{len(c)} " + " ".join(str(int(v)) for v in c) for c in mesh.cells]

    def block(kind, n, data):
        if not data:
            return
        lines.append(f"{kind} {n}")
        for name, arr in data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.shape[0] != n:
                raise ValueError(f"field {name!r} has {arr.shape[0]} entries, expected {n}")
            if arr.ndim == 1:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(repr(float(v)) for v in arr)
            else:
                lines.append(f"VECTORS {name} double")
                lines.extend(" ".join(repr(float(v)) for v in row) for row in _vec3(arr))

    block("POINT_DATA", mesh.n_vertices, point_data)
    block("CELL_DATA", mesh.n_cells, cell_data)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
