"""Polygonal meshes of the unit square and the per-cell geometry used by the
mimetic discretisation.

Cells are stored as counterclockwise vertex cycles.  Local edge ``i`` of a
cell joins local vertex ``i`` to local vertex ``i + 1`` (mod ``m``), so the
cell tangent of that edge points from its first to its second endpoint and
the outward normal is the tangent rotated clockwise by a right angle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateElementError, MeshError, MeshFormatError

SIDES = ("left", "right", "bottom", "top")

# |E| < DEGENERATE_TOL * h_E**2 marks a collapsed cell
DEGENERATE_TOL = 1e-12


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


class PolygonalMesh:
    """Conforming polygonal decomposition with oriented edges and side tags.

    Parameters
    ----------
    vertices : (nv, 2) array
    cells : sequence of counterclockwise vertex-index cycles
    vertex_sides : mapping side -> vertex ids, optional
        Inferred from the unit-square coordinates when omitted.
    """

    def __init__(self, vertices, cells, vertex_sides=None, family=None, n=None, seed=None):
        self.vertices = _readonly(np.asarray(vertices, dtype=float).reshape(-1, 2))
        self.cells = tuple(_readonly(np.asarray(c, dtype=np.int64)) for c in cells)
        self.family = family
        self.n = n
        self.seed = seed
        nv = len(self.vertices)
        for ci, c in enumerate(self.cells):
            if len(c) < 3:
                raise MeshError(f"cell {ci} has fewer than 3 vertices")
            if c.min() < 0 or c.max() >= nv:
                raise MeshError(f"cell {ci} references a vertex outside 0..{nv - 1}")
            if len(set(c.tolist())) != len(c):
                raise MeshError(f"cell {ci} repeats a vertex")
        self._build_edges()
        if vertex_sides is None:
            vertex_sides = self._sides_from_coordinates()
        self.vertex_sides = {s: _readonly(np.unique(np.asarray(vertex_sides.get(s, []), dtype=np.int64)))
                             for s in SIDES}
        self._tag_edges()

    # -- topology -------------------------------------------------------
    def _build_edges(self):
        index = {}
        edges = []
        edge_cells = []
        cell_edges = []
        cell_signs = []
        for ci, c in enumerate(self.cells):
            ce, cs = [], []
            m = len(c)
            for i in range(m):
                a, b = int(c[i]), int(c[(i + 1) % m])
                key = (a, b) if a < b else (b, a)
                e = index.get(key)
                if e is None:
                    e = len(edges)
                    index[key] = e
                    edges.append(key)
                    edge_cells.append([ci])
                else:
                    edge_cells[e].append(ci)
                ce.append(e)
                cs.append(1 if a < b else -1)
            cell_edges.append(_readonly(np.array(ce, dtype=np.int64)))
            cell_signs.append(_readonly(np.array(cs, dtype=np.int64)))
        self._edge_index = index
        self.edges = _readonly(np.array(edges, dtype=np.int64).reshape(-1, 2))
        self.cell_edges = tuple(cell_edges)
        self.cell_edge_signs = tuple(cell_signs)
        self.edge_cell_lists = tuple(tuple(x) for x in edge_cells)
        ec = np.full((len(edges), 2), -1, dtype=np.int64)
        for e, lst in enumerate(edge_cells):
            ec[e, : min(2, len(lst))] = lst[:2]
        self.edge_cells = _readonly(ec)

    def _sides_from_coordinates(self, tol=1e-12):
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return {
            "left": np.flatnonzero(np.abs(x) <= tol),
            "right": np.flatnonzero(np.abs(x - 1.0) <= tol),
            "bottom": np.flatnonzero(np.abs(y) <= tol),
            "top": np.flatnonzero(np.abs(y - 1.0) <= tol),
        }

    def _tag_edges(self):
        bnd_vertex = np.zeros(self.n_vertices, dtype=bool)
        for s in SIDES:
            bnd_vertex[self.vertex_sides[s]] = True
        self.boundary_vertex = _readonly(bnd_vertex)
        single = np.array([len(lst) == 1 for lst in self.edge_cell_lists], dtype=bool)
        self.boundary_edge = _readonly(single)
        sides = {}
        for s in SIDES:
            mark = np.zeros(self.n_vertices, dtype=bool)
            mark[self.vertex_sides[s]] = True
            on = single & mark[self.edges[:, 0]] & mark[self.edges[:, 1]]
            sides[s] = _readonly(np.flatnonzero(on))
        self.edge_sides = sides

    # -- sizes ------------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_edges(self):
        return len(self.edges)

    def edge_id(self, a, b):
        return self._edge_index[(a, b) if a < b else (b, a)]

    # -- global edge orientation -------------------------------------------
    @cached_property
    def edge_tangents(self):
        """Fixed unit tangents t_e, pointing from the lower to the higher vertex id."""
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return _readonly(d / np.linalg.norm(d, axis=1)[:, None])

    @cached_property
    def edge_normals(self):
        """Fixed unit normals n_e; t_e is n_e rotated counterclockwise by pi/2."""
        t = self.edge_tangents
        return _readonly(np.column_stack([t[:, 1], -t[:, 0]]))

    @cached_property
    def edge_lengths(self):
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return _readonly(np.linalg.norm(d, axis=1))

    # -- cell batches -------------------------------------------------------
    @cached_property
    def cell_offsets(self):
        """Start of each cell in flat per-cell-edge arrays (length n_cells + 1)."""
        sizes = np.array([len(c) for c in self.cells], dtype=np.int64)
        return _readonly(np.concatenate([[0], np.cumsum(sizes)]))

    @cached_property
    def groups(self):
        """Cells grouped by vertex count: list of (m, cell_ids, (nc, m) vertex ids)."""
        by_m = {}
        for ci, c in enumerate(self.cells):
            by_m.setdefault(len(c), []).append(ci)
        out = []
        for m in sorted(by_m):
            ids = np.array(by_m[m], dtype=np.int64)
            conn = np.array([self.cells[i] for i in ids], dtype=np.int64)
            out.append((m, _readonly(ids), _readonly(conn)))
        return tuple(out)

    @cached_property
    def cell_areas(self):
        return _readonly(np.array([_shoelace(self.vertices[c]) for c in self.cells]))

    @cached_property
    def cell_diameters(self):
        return _readonly(np.array([_diameter(self.vertices[c]) for c in self.cells]))

    @property
    def h(self):
        """Mesh size: the largest cell diameter."""
        return float(self.cell_diameters.max())

    def __repr__(self):
        tag = f" {self.family} N={self.n}" if self.family else ""
        return f"<PolygonalMesh{tag}: {self.n_vertices} vertices, {self.n_edges} edges, {self.n_cells} cells>"


def _shoelace(xy):
    x, y = xy[:, 0], xy[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _diameter(xy):
    d = xy[:, None, :] - xy[None, :, :]
    return float(np.sqrt((d ** 2).sum(-1).max()))


@dataclass(frozen=True)
class CellGeometry:
    """Geometric data of one polygon, edges numbered as its vertex cycle."""

    vertices: np.ndarray          # (m, 2) absolute coordinates
    area: float
    diameter: float
    barycenter: np.ndarray
    edge_lengths: np.ndarray      # (m,)
    normals: np.ndarray           # (m, 2) outward
    tangents: np.ndarray          # (m, 2) from v_i to v_{i+1}
    centered: np.ndarray = field(repr=False)  # vertices minus barycenter

    @property
    def m(self):
        return len(self.vertices)


def polygon_geometry(xy, cell=None) -> CellGeometry:
    xy = np.asarray(xy, dtype=float)
    area = _shoelace(xy)
    diam = _diameter(xy)
    if not area > DEGENERATE_TOL * diam ** 2:
        raise DegenerateElementError(cell, f"area {area:.3e} below tolerance (h_E={diam:.3e})")
    nxt = np.roll(xy, -1, axis=0)
    cross = xy[:, 0] * nxt[:, 1] - nxt[:, 0] * xy[:, 1]
    bary = ((xy + nxt) * cross[:, None]).sum(0) / (6.0 * area)
    d = nxt - xy
    lengths = np.linalg.norm(d, axis=1)
    if np.any(lengths <= 0):
        raise DegenerateElementError(cell, "zero-length edge")
    tang = d / lengths[:, None]
    normals = np.column_stack([tang[:, 1], -tang[:, 0]])
    return CellGeometry(xy, area, diam, bary, lengths, normals, tang, xy - bary)


def cell_geometry(mesh: PolygonalMesh, cell: int) -> CellGeometry:
    if not 0 <= cell < mesh.n_cells:
        raise IndexError(f"cell id {cell} out of range")
    return polygon_geometry(mesh.vertices[mesh.cells[cell]], cell)


@dataclass(frozen=True)
class BatchGeometry:
    """Vectorised geometry for ``nc`` cells with the same vertex count ``m``."""

    X: np.ndarray          # (nc, m, 2)
    area: np.ndarray       # (nc,)
    diameter: np.ndarray
    barycenter: np.ndarray  # (nc, 2)
    L: np.ndarray          # (nc, m) edge lengths
    t: np.ndarray          # (nc, m, 2)
    n: np.ndarray          # (nc, m, 2)
    xb: np.ndarray         # (nc, m, 2) barycentre-centred vertices

    @property
    def m(self):
        return self.X.shape[1]

    def __len__(self):
        return self.X.shape[0]


def batch_geometry(X, cell_ids=None) -> BatchGeometry:
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    nxt = np.roll(X, -1, axis=1)
    cross = X[..., 0] * nxt[..., 1] - nxt[..., 0] * X[..., 1]
    area = 0.5 * cross.sum(1)
    dd = X[:, :, None, :] - X[:, None, :, :]
    diam = np.sqrt((dd ** 2).sum(-1).max(axis=(1, 2)))
    bad = ~(area > DEGENERATE_TOL * diam ** 2)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        cid = int(cell_ids[k]) if cell_ids is not None else k
        raise DegenerateElementError(cid, f"area {area[k]:.3e} below tolerance")
    bary = ((X + nxt) * cross[..., None]).sum(1) / (6.0 * area[:, None])
    d = nxt - X
    L = np.linalg.norm(d, axis=2)
    if np.any(L <= 0):
        k = int(np.flatnonzero((L <= 0).any(1))[0])
        cid = int(cell_ids[k]) if cell_ids is not None else k
        raise DegenerateElementError(cid, "zero-length edge")
    t = d / L[..., None]
    n = np.stack([t[..., 1], -t[..., 0]], axis=-1)
    return BatchGeometry(X, area, diam, bary, L, t, n, X - bary[:, None, :])


def mesh_batches(mesh: PolygonalMesh):
    """Yield (cell_ids, connectivity, BatchGeometry) for each vertex-count group."""
    for m, ids, conn in mesh.groups:
        yield ids, conn, batch_geometry(mesh.vertices[conn], ids)


# -- validation --------------------------------------------------------------

@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.violations

    def kinds(self):
        return sorted({v.split(":", 1)[0] for v in self.violations})

    def summary(self):
        lines = [f"{k} = {v:.6g}" if isinstance(v, float) else f"{k} = {v}"
                 for k, v in self.metrics.items()]
        lines += self.violations or ["no violations"]
        return "\n".join(lines)


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return d1 * d2 < 0 and d3 * d4 < 0


def validate_mesh(mesh: PolygonalMesh, domain_area: float | None = 1.0) -> ValidationReport:
    """Check conformity, orientation, degeneracy and report shape metrics.

    Never raises; every problem is returned as a ``"<kind>: <detail>"`` string.
    """
    rep = ValidationReport()
    V = mesh.vertices
    L = mesh.edge_lengths
    for e in np.flatnonzero(L <= 0):
        rep.violations.append(f"degenerate: edge {e} has zero length")

    areas = mesh.cell_areas
    diams = mesh.cell_diameters
    for ci in range(mesh.n_cells):
        if areas[ci] < 0:
            rep.violations.append(f"orientation: cell {ci} is clockwise (area {areas[ci]:.3e})")
        elif areas[ci] < DEGENERATE_TOL * diams[ci] ** 2:
            rep.violations.append(f"degenerate: cell {ci} has area {areas[ci]:.3e}")
        xy = V[mesh.cells[ci]]
        m = len(xy)
        if m > 3:
            for i in range(m):
                for j in range(i + 2, m):
                    if i == 0 and j == m - 1:
                        continue
                    if _segments_cross(xy[i], xy[(i + 1) % m], xy[j], xy[(j + 1) % m]):
                        rep.violations.append(f"self-intersection: cell {ci} edges {i} and {j} cross")

    for e, lst in enumerate(mesh.edge_cell_lists):
        if len(lst) > 2:
            rep.violations.append(f"conformity: edge {e} shared by {len(lst)} cells {list(lst)}")
        elif len(lst) == 2:
            a, b = lst
            sa = _sign_in_cell(mesh, a, e)
            sb = _sign_in_cell(mesh, b, e)
            if sa == sb:
                rep.violations.append(f"orientation: edge {e} traversed in the same direction by cells {a} and {b}")
        else:
            if not any(e in mesh.edge_sides[s] for s in SIDES):
                rep.violations.append(f"conformity: edge {e} belongs to one cell but is not on a tagged boundary side")

    # hanging vertices: a vertex lying strictly inside some edge
    if mesh.n_edges:
        tree = cKDTree(V)
        mids = 0.5 * (V[mesh.edges[:, 0]] + V[mesh.edges[:, 1]])
        for e, near in enumerate(tree.query_ball_point(mids, 0.5 * L * (1 + 1e-9))):
            a, b = mesh.edges[e]
            pa, pb = V[a], V[b]
            for v in near:
                if v == a or v == b:
                    continue
                d = pb - pa
                s = np.dot(V[v] - pa, d) / np.dot(d, d)
                off = abs(d[0] * (V[v][1] - pa[1]) - d[1] * (V[v][0] - pa[0])) / np.sqrt(np.dot(d, d))
                if 1e-12 < s < 1 - 1e-12 and off <= 1e-12 * max(L[e], 1.0):
                    rep.violations.append(f"conformity: vertex {v} lies inside edge {e} ({a}, {b})")

    if domain_area is not None and mesh.n_cells:
        total = float(areas.sum())
        if abs(total - domain_area) > 1e-10 * domain_area:
            rep.violations.append(f"conformity: cell areas sum to {total:.12g}, domain area {domain_area:.12g}")

    if mesh.n_cells:
        ratio_edge = min(
            float(L[mesh.cell_edges[ci]].min() / diams[ci]) for ci in range(mesh.n_cells)
        )
        pos = areas > 0
        rep.metrics = {
            "cells": mesh.n_cells,
            "vertices": mesh.n_vertices,
            "edges": mesh.n_edges,
            "h": float(diams.max()),
            "min_edge_over_diameter": ratio_edge,
            "min_area_over_diameter2": float((areas[pos] / diams[pos] ** 2).min()) if pos.any() else 0.0,
            "nonconvex_cells": int(sum(not is_convex(V[c]) for c in mesh.cells)),
        }
    return rep


def _sign_in_cell(mesh, ci, e):
    k = int(np.flatnonzero(mesh.cell_edges[ci] == e)[0])
    return int(mesh.cell_edge_signs[ci][k])


def is_convex(xy, tol=1e-12):
    nxt = np.roll(xy, -1, axis=0)
    prv = np.roll(xy, 1, axis=0)
    a = xy - prv
    b = nxt - xy
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    scale = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    return bool(np.all(cross >= -tol * scale))


# -- file format ------------------------------------------------------------

MESH_MAGIC = "# mfdplate mesh 1"


def export_mesh(mesh: PolygonalMesh, path):
    """Write the text mesh format; floats use shortest round-trip repr."""
    lines = [MESH_MAGIC]
    for key in ("family", "n", "seed"):
        val = getattr(mesh, key)
        if val is not None:
            lines.append(f"{key} {val}")
    lines.append(f"vertices {mesh.n_vertices}")
    lines += [f"{i} {float(x)!r} {float(y)!r}" for i, (x, y) in enumerate(mesh.vertices)]
    lines.append(f"cells {mesh.n_cells}")
    lines += [f"{i} " + " ".join(str(int(v)) for v in c) for i, c in enumerate(mesh.cells)]
    lines.append("boundary")
    for s in SIDES:
        lines.append(f"{s} vertices " + " ".join(str(int(v)) for v in mesh.vertex_sides[s]))
        lines.append(f"{s} edges " + " ".join(f"{a}-{b}" for a, b in mesh.edges[mesh.edge_sides[s]]))
    lines.append("end")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _fail(lineno, msg):
    raise MeshFormatError(f"line {lineno}: {msg}")


def import_mesh(path, validate=True) -> PolygonalMesh:
    """Read a mesh written by :func:`export_mesh` and re-validate it."""
    with open(path) as fh:
        raw = fh.read().splitlines()
    if not raw or raw[0].strip() != MESH_MAGIC:
        raise MeshFormatError(f"{path}: missing header {MESH_MAGIC!r}")
    meta = {}
    vertices, cells = None, None
    sides_v, sides_e = {}, {}
    i = 1
    section = None
    while i < len(raw):
        line = raw[i].strip()
        lineno = i + 1
        i += 1
        if not line or line.startswith("#"):
            continue
        head, _, rest = line.partition(" ")
        if section is None and head in ("family", "n", "seed"):
            meta[head] = rest.strip()
            continue
        if head in ("vertices", "cells") and section != "boundary":
            try:
                count = int(rest)
            except ValueError:
                _fail(lineno, f"bad {head} count {rest!r}")
            block = raw[i:i + count]
            if len(block) < count:
                _fail(lineno, f"expected {count} {head} entries, file ends early")
            rows = []
            for k, entry in enumerate(block):
                parts = entry.split()
                if not parts or parts[0] != str(k):
                    _fail(i + k + 1, f"expected {head[:-1]} index {k}")
                rows.append(parts[1:])
            i += count
            if head == "vertices":
                try:
                    vertices = np.array([[float(a), float(b)] for a, b in rows])
                except ValueError:
                    _fail(lineno, "vertex rows must hold exactly two floats")
            else:
                try:
                    cells = [[int(v) for v in r] for r in rows]
                except ValueError:
                    _fail(lineno, "cell rows must hold integer vertex ids")
            section = head
            continue
        if head == "boundary":
            section = "boundary"
            continue
        if head == "end":
            break
        if section == "boundary":
            side, _, items = rest.partition(" ")
            if head not in SIDES:
                _fail(lineno, f"unknown side tag {head!r}")
            toks = items.split()
            if side == "vertices":
                sides_v[head] = [int(v) for v in toks]
            elif side == "edges":
                pairs = []
                for tok in toks:
                    a, sep, b = tok.partition("-")
                    if not sep:
                        _fail(lineno, f"bad edge token {tok!r}")
                    pairs.append((int(a), int(b)))
                sides_e[head] = pairs
            else:
                _fail(lineno, f"unknown boundary entry {side!r}")
            continue
        _fail(lineno, f"unexpected content {line!r}")
    if vertices is None or cells is None:
        raise MeshFormatError(f"{path}: vertices and cells sections are required")
    nv = len(vertices)
    for ci, c in enumerate(cells):
        bad = [v for v in c if not 0 <= v < nv]
        if bad:
            raise MeshFormatError(f"{path}: cell {ci} references unknown vertex {bad[0]}")
    for s, vs in sides_v.items():
        bad = [v for v in vs if not 0 <= v < nv]
        if bad:
            raise MeshFormatError(f"{path}: side {s} references unknown vertex {bad[0]}")
    family = meta.get("family")
    n = int(meta["n"]) if "n" in meta else None
    seed = int(meta["seed"]) if meta.get("seed") not in (None, "None") else None
    try:
        mesh = PolygonalMesh(vertices, cells, sides_v or None, family=family, n=n, seed=seed)
    except MeshError as exc:
        raise MeshFormatError(f"{path}: {exc}") from exc
    for s, pairs in sides_e.items():
        for a, b in pairs:
            e = mesh._edge_index.get((min(a, b), max(a, b)))
            if e is None:
                raise MeshFormatError(f"{path}: side {s} references dangling edge {a}-{b}")
    if validate:
        report = validate_mesh(mesh)
        if not report.ok:
            raise MeshError(f"{path}: imported mesh failed validation: {'; '.join(report.violations)}")
    return mesh
