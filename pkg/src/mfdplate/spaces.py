"""Discrete spaces W_h (vertex deflections), H_h (vertex rotations) and
Gamma_h (tangential edge shears), with their interpolants, the discrete
gradient, the reduction operator and the discrete norms.

Vertex fields are stored over *all* mesh vertices, eliminated ones carrying
their prescribed (lifted) values; ``FieldVector.free`` extracts the unknowns.
Shear fields are stored per cell edge (flat, in ``mesh.cell_offsets``
order), so an interior edge appears twice with opposite signs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import SIDES, PolygonalMesh, mesh_batches

BETA_X, BETA_Y, DEFLECTION = 0, 1, 2
ROLES = ("W", "H", "Gamma")

_GAUSS2 = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def parse_bc(bc):
    """Normalise a boundary specification to ``{side: 'C'|'S'|'F'}``.

    A 4-letter string is read in side order left, right, bottom, top
    (x=0, x=1, y=0, y=1), so ``"CCCF"`` leaves the top edge free.
    """
    if isinstance(bc, str):
        if len(bc) != 4:
            raise ValueError(f"boundary string must have 4 letters (left, right, bottom, top), got {bc!r}")
        bc = dict(zip(SIDES, bc.upper()))
    out = {}
    for side, kind in bc.items():
        if side not in SIDES:
            raise ValueError(f"unknown side tag {side!r}")
        kind = str(kind).upper()
        if kind not in ("C", "S", "F"):
            raise ValueError(f"unknown boundary condition {kind!r} on side {side}")
        out[side] = kind
    for side in SIDES:
        out.setdefault(side, "F")
    return out


_SIDE_TANGENT_COMPONENT = {"left": BETA_Y, "right": BETA_Y, "bottom": BETA_X, "top": BETA_X}


@dataclass(frozen=True)
class DofMap:
    """Global numbering of the free vertex unknowns.

    ``index[v, c]`` is the global unknown of component ``c`` (beta_x, beta_y,
    w) at vertex ``v``, or -1 when eliminated; ``prescribed[v, c]`` holds the
    lifted value of eliminated slots.
    """

    index: np.ndarray
    prescribed: np.ndarray
    bc: dict
    support: str = "soft"

    @property
    def n_vertices(self):
        return self.index.shape[0]

    @property
    def free_mask(self):
        return self.index >= 0

    @property
    def n_free(self):
        return int(self.free_mask.sum())

    @property
    def n_deflection(self):
        return int(self.free_mask[:, DEFLECTION].sum())

    @property
    def n_rotation(self):
        return int(self.free_mask[:, :2].sum())

    @property
    def free_slots(self):
        """Flat slot ids (3*v + c) of the unknowns, in global index order."""
        flat = self.index.ravel()
        slots = np.flatnonzero(flat >= 0)
        return slots[np.argsort(flat[slots])]

    @property
    def fixed_slots(self):
        return np.flatnonzero(self.index.ravel() < 0)

    def expand(self, x):
        """Scatter a free-dof vector into a (nv, 3) slot array with lift values."""
        full = self.prescribed.copy()
        full.ravel()[self.free_slots] = x
        return full

    def restrict(self, slots_values):
        return np.asarray(slots_values).reshape(-1)[self.free_slots]


def build_dof_map(mesh: PolygonalMesh, bc="CCCC", support="soft", lift=None) -> DofMap:
    """Eliminate boundary unknowns side by side.

    ``C`` removes w and both rotations, ``S`` removes w (and with
    ``support="hard"`` also the rotation component tangent to the side),
    ``F`` removes nothing.  A corner gets the union of its sides.  ``lift``
    is an optional callable ``(x, y) -> (w, beta_x, beta_y)`` giving the
    prescribed values; zero otherwise.
    """
    sides = parse_bc(bc)
    if support not in ("soft", "hard"):
        raise ValueError(f"support must be 'soft' or 'hard', got {support!r}")
    nv = mesh.n_vertices
    fixed = np.zeros((nv, 3), dtype=bool)
    for side, kind in sides.items():
        vs = mesh.vertex_sides[side]
        if kind == "C":
            fixed[vs, :] = True
        elif kind == "S":
            fixed[vs, DEFLECTION] = True
            if support == "hard":
                fixed[vs, _SIDE_TANGENT_COMPONENT[side]] = True
    index = -np.ones((nv, 3), dtype=np.int64)
    free = ~fixed.ravel()
    index.ravel()[free] = np.arange(int(free.sum()))
    prescribed = np.zeros((nv, 3))
    if lift is not None:
        x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
        w, bx, by = lift(x, y)
        vals = np.column_stack([np.broadcast_to(bx, x.shape), np.broadcast_to(by, x.shape),
                                np.broadcast_to(w, x.shape)])
        prescribed[fixed] = vals[fixed]
    index.flags.writeable = False
    prescribed.flags.writeable = False
    return DofMap(index, prescribed, sides, support)


@dataclass(frozen=True)
class FieldVector:
    role: str
    values: np.ndarray

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")

    def free(self, dofmap: DofMap):
        """Unknowns of this vertex field in global dof order."""
        if self.role == "W":
            mask = dofmap.index[:, DEFLECTION] >= 0
            order = np.argsort(dofmap.index[mask, DEFLECTION])
            return self.values[mask][order]
        if self.role == "H":
            mask = dofmap.index[:, :2] >= 0
            order = np.argsort(dofmap.index[:, :2][mask])
            return self.values[mask][order]
        raise ValueError("shear fields carry no vertex unknowns")

    def cell_values(self, mesh, cell):
        if self.role != "Gamma":
            raise ValueError("cell_values is defined for shear fields")
        o = mesh.cell_offsets
        return self.values[o[cell]:o[cell + 1]]

    def __sub__(self, other):
        if other.role != self.role:
            raise ValueError(f"role mismatch: {self.role} - {other.role}")
        return FieldVector(self.role, self.values - other.values)

    def __add__(self, other):
        if other.role != self.role:
            raise ValueError(f"role mismatch: {self.role} + {other.role}")
        return FieldVector(self.role, self.values + other.values)

    def __mul__(self, s):
        return FieldVector(self.role, self.values * s)

    __rmul__ = __mul__


def interp_scalar(f, mesh: PolygonalMesh, dofmap: DofMap | None = None) -> FieldVector:
    """Vertex values f(v); eliminated vertices take their prescribed value."""
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    vals = np.array(np.broadcast_to(f(x, y), x.shape), dtype=float)
    if dofmap is not None:
        fixed = dofmap.index[:, DEFLECTION] < 0
        vals[fixed] = dofmap.prescribed[fixed, DEFLECTION]
    return FieldVector("W", vals)


def interp_vector(g, mesh: PolygonalMesh, dofmap: DofMap | None = None) -> FieldVector:
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    gx, gy = g(x, y)
    vals = np.column_stack([np.broadcast_to(gx, x.shape), np.broadcast_to(gy, x.shape)]).astype(float)
    if dofmap is not None:
        fixed = dofmap.index[:, :2] < 0
        vals[fixed] = dofmap.prescribed[:, :2][fixed]
    return FieldVector("H", vals)


def _cell_edge_endpoints(mesh):
    """Flat (sum m, 2) arrays of first/second endpoint ids of every cell edge."""
    first = np.concatenate(mesh.cells)
    second = np.concatenate([np.roll(c, -1) for c in mesh.cells])
    return first, second


def interp_shear(d, mesh: PolygonalMesh) -> FieldVector:
    """Mean tangential component of ``d`` on each cell edge (2-point Gauss)."""
    a, b = _cell_edge_endpoints(mesh)
    pa, pb = mesh.vertices[a], mesh.vertices[b]
    t = pb - pa
    t /= np.linalg.norm(t, axis=1)[:, None]
    val = np.zeros(len(a))
    for s in _GAUSS2:
        p = (1 - s) * pa + s * pb
        dx, dy = d(p[:, 0], p[:, 1])
        val += 0.5 * (np.broadcast_to(dx, val.shape) * t[:, 0] + np.broadcast_to(dy, val.shape) * t[:, 1])
    return FieldVector("Gamma", val)


def discrete_gradient(v: FieldVector, mesh: PolygonalMesh, dofmap: DofMap | None = None) -> FieldVector:
    """Edge difference quotients; ``v`` already carries lifted boundary values."""
    if v.role != "W":
        raise ValueError("discrete gradient acts on W_h fields")
    a, b = _cell_edge_endpoints(mesh)
    L = np.linalg.norm(mesh.vertices[b] - mesh.vertices[a], axis=1)
    return FieldVector("Gamma", (v.values[b] - v.values[a]) / L)


def reduction(eta: FieldVector, mesh: PolygonalMesh, dofmap: DofMap | None = None) -> FieldVector:
    """Tangential component of the endpoint average on each cell edge."""
    if eta.role != "H":
        raise ValueError("reduction acts on H_h fields")
    a, b = _cell_edge_endpoints(mesh)
    t = mesh.vertices[b] - mesh.vertices[a]
    t /= np.linalg.norm(t, axis=1)[:, None]
    avg = 0.5 * (eta.values[a] + eta.values[b])
    return FieldVector("Gamma", (avg * t).sum(1))


def _per_cell_sum(mesh, flat):
    return np.add.reduceat(flat, mesh.cell_offsets[:-1])


def norm_w(v: FieldVector, mesh: PolygonalMesh) -> float:
    """Discrete H^1-type seminorm of a W_h field."""
    if v.role != "W":
        raise ValueError(f"W_h norm requested for a {v.role} field")
    g = discrete_gradient(v, mesh).values
    return float(np.sqrt((mesh.cell_areas * _per_cell_sum(mesh, g ** 2)).sum()))


def _edge_differences(eta, mesh):
    a, b = _cell_edge_endpoints(mesh)
    L = np.linalg.norm(mesh.vertices[b] - mesh.vertices[a], axis=1)
    return (eta[a] - eta[b]) / L[:, None]


def norm_h_triple(eta: FieldVector, mesh: PolygonalMesh) -> float:
    if eta.role != "H":
        raise ValueError(f"H_h triple norm requested for a {eta.role} field")
    d = _edge_differences(eta.values, mesh)
    return float(np.sqrt((mesh.cell_areas * _per_cell_sum(mesh, (d ** 2).sum(1))).sum()))


def norm_h(eta: FieldVector, mesh: PolygonalMesh) -> float:
    """Strain-type norm: per cell, the triple norm after removing the best
    infinitesimal rotation about the barycentre (closed-form 1-D least squares)."""
    if eta.role != "H":
        raise ValueError(f"H_h norm requested for a {eta.role} field")
    total = 0.0
    for ids, conn, g in mesh_batches(mesh):
        e = eta.values[conn]                                   # (nc, m, 2)
        rot = np.stack([-g.xb[..., 1], g.xb[..., 0]], axis=-1)
        de = (e - np.roll(e, -1, axis=1)) / g.L[..., None]
        dr = (rot - np.roll(rot, -1, axis=1)) / g.L[..., None]
        c = (de * dr).sum((1, 2)) / (dr * dr).sum((1, 2))
        res = de - c[:, None, None] * dr
        total += float((g.area * (res ** 2).sum((1, 2))).sum())
    return float(np.sqrt(total))


def norm_gamma(delta: FieldVector, mesh: PolygonalMesh) -> float:
    if delta.role != "Gamma":
        raise ValueError(f"Gamma_h norm requested for a {delta.role} field")
    return float(np.sqrt((mesh.cell_areas * _per_cell_sum(mesh, delta.values ** 2)).sum()))


def norms(field: FieldVector, mesh: PolygonalMesh) -> dict:
    """All discrete norms defined for the field's role."""
    if field.role == "W":
        return {"W": norm_w(field, mesh)}
    if field.role == "H":
        return {"H_triple": norm_h_triple(field, mesh), "H": norm_h(field, mesh)}
    return {"Gamma": norm_gamma(field, mesh)}
