"""Global sparse assembly with boundary elimination and Dirichlet lift.

Local matrices are scattered into all ``3 * n_vertices`` slots (slot
``3v + c``, c = beta_x, beta_y, w), converted to CSR and then restricted to
the free unknowns.  Cells are processed group by group (same vertex count)
in a fixed order, so the result is bitwise reproducible regardless of the
number of workers.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import local_forms as lf
from .errors import MfdError
from .mesh import PolygonalMesh, batch_geometry
from .spaces import DEFLECTION, DofMap

KIND_NAMES = ("beta_x", "beta_y", "w")


@dataclass(frozen=True)
class SparseSymSystem:
    """Symmetric system on the free unknowns.

    ``lift_rhs`` is ``-A_fp u_p``, the right-hand-side correction from the
    prescribed boundary values (zero for homogeneous conditions).
    """

    matrix: sp.csr_matrix
    dofmap: DofMap
    lift_rhs: np.ndarray | None = None
    rhs: np.ndarray | None = None

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def row_vertex(self):
        return self.dofmap.free_slots // 3

    @property
    def row_kind(self):
        return self.dofmap.free_slots % 3

    def describe_row(self, i):
        return int(self.row_vertex[i]), KIND_NAMES[int(self.row_kind[i])]


def _stiffness_slots(conn):
    m = conn.shape[1]
    rot = (3 * conn[:, :, None] + np.arange(2)).reshape(len(conn), 2 * m)
    return np.concatenate([rot, 3 * conn + DEFLECTION], axis=1)


def _deflection_slots(conn):
    return 3 * conn + DEFLECTION


def _chunks(n, workers):
    if workers <= 1 or n < 2 * workers:
        return [slice(0, n)]
    edges = np.linspace(0, n, workers + 1).astype(int)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]


def _element_loop(mesh, local_fn, slot_fn, workers=1):
    """Collect COO triplets of ``local_fn(geometry, cell_ids)`` over all cells."""
    rows, cols, vals = [], [], []
    for m, ids, conn in mesh.groups:
        X = mesh.vertices[conn]
        parts = _chunks(len(ids), workers)

        def work(s):
            g = batch_geometry(X[s], ids[s])
            return local_fn(g, ids[s])

        if len(parts) == 1:
            blocks = [work(parts[0])]
        else:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                blocks = list(ex.map(work, parts))
        loc = np.concatenate(blocks, axis=0)
        slots = slot_fn(conn)
        k = slots.shape[1]
        rows.append(np.repeat(slots, k, axis=1).ravel())
        cols.append(np.tile(slots, (1, k)).ravel())
        vals.append(loc.ravel())
    n = 3 * mesh.n_vertices
    if not rows:
        return sp.csr_matrix((n, n))
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    A = A.tocsr()
    A.sum_duplicates()
    # duplicate sums for (i, j) and (j, i) may round differently
    return ((A + A.T) * 0.5).tocsr()


def _restrict(A_full, dofmap):
    free = dofmap.free_slots
    fixed = dofmap.fixed_slots
    A = A_full[free][:, free].tocsr()
    up = dofmap.prescribed.ravel()[fixed]
    if fixed.size and np.any(up != 0):
        lift = -(A_full[free][:, fixed] @ up)
    else:
        lift = np.zeros(len(free))
    return A, lift


def assemble_full_stiffness(mesh: PolygonalMesh, mat: lf.MaterialParams, workers=1):
    """Stiffness on all 3*nv slots, before elimination."""
    def local(g, ids):
        A, _ = lf._stiffness(g, mat, cell_ids=ids)
        return A
    return _element_loop(mesh, local, _stiffness_slots, workers)


def assemble_stiffness(mesh: PolygonalMesh, dofmap: DofMap, mat: lf.MaterialParams, workers=1) -> SparseSymSystem:
    A, lift = _restrict(assemble_full_stiffness(mesh, mat, workers), dofmap)
    return SparseSymSystem(A, dofmap, lift)


def assemble_bending(mesh: PolygonalMesh, dofmap: DofMap, mat: lf.MaterialParams) -> SparseSymSystem:
    """Global matrix of the bending form alone (rotation block), used by error norms."""
    def local(g, ids):
        M1, _, _, _ = lf._bending(g, mat, cell_ids=ids)
        m = g.m
        out = np.zeros((len(g), 3 * m, 3 * m))
        out[:, :2 * m, :2 * m] = M1
        return out
    A, lift = _restrict(_element_loop(mesh, local, _stiffness_slots), dofmap)
    return SparseSymSystem(A, dofmap, lift)


def load_slots(mesh: PolygonalMesh, g) -> np.ndarray:
    """Load vector on all slots, shape (nv, 3); ``g`` is a callable or a constant."""
    f = np.zeros(3 * mesh.n_vertices)
    for m, ids, conn in mesh.groups:
        geo = batch_geometry(mesh.vertices[conn], ids)
        w = lf._weights(geo, ids)
        if callable(g):
            gbar = lf.cell_averages(geo, g)
        else:
            gbar = np.full(len(ids), float(g))
        np.add.at(f, _deflection_slots(conn).ravel(), (gbar[:, None] * w).ravel())
    return f.reshape(-1, 3)


def assemble_load(mesh: PolygonalMesh, dofmap: DofMap, mat: lf.MaterialParams, g, stiffness=None) -> np.ndarray:
    """Free-dof load vector plus the lift correction of the stiffness.

    Pass the already assembled ``stiffness`` system to reuse its lift
    correction; otherwise it is assembled here when boundary data are
    inhomogeneous.
    """
    f = dofmap.restrict(load_slots(mesh, 0.0 if g is None else g))
    if stiffness is not None:
        lift = stiffness.lift_rhs
    elif np.any(dofmap.prescribed != 0):
        lift = assemble_stiffness(mesh, dofmap, mat).lift_rhs
    else:
        lift = None
    return f if lift is None else f + lift


def assemble_source(mesh, dofmap, mat, g, workers=1) -> SparseSymSystem:
    A = assemble_stiffness(mesh, dofmap, mat, workers)
    f = assemble_load(mesh, dofmap, mat, g, stiffness=A)
    return SparseSymSystem(A.matrix, dofmap, A.lift_rhs, f)


def mass_slots(mesh: PolygonalMesh, mat: lf.MaterialParams) -> np.ndarray:
    d = np.zeros(3 * mesh.n_vertices)
    for m, ids, conn in mesh.groups:
        w = lf._weights(batch_geometry(mesh.vertices[conn], ids), ids)
        np.add.at(d, _stiffness_slots(conn).ravel(), lf.mass_diagonal(w, mat).ravel())
    return d.reshape(-1, 3)


def assemble_mass(mesh: PolygonalMesh, dofmap: DofMap, mat: lf.MaterialParams) -> SparseSymSystem:
    d = dofmap.restrict(mass_slots(mesh, mat))
    return SparseSymSystem(sp.diags(d, format="csr"), dofmap)


def assemble_buckling(mesh: PolygonalMesh, dofmap: DofMap, sigma, alpha=0.0) -> SparseSymSystem:
    sigma = lf.SigmaTensor.parse(sigma)
    if sigma.rank == 0:
        raise MfdError("pre-stress tensor is identically zero")

    def local(g, ids):
        B, _, _ = lf._buckling(g, sigma, alpha)
        return B
    B, _ = _restrict(_element_loop(mesh, local, _deflection_slots), dofmap)
    return SparseSymSystem(B, dofmap)


def export_triplets(system: SparseSymSystem, path):
    """Write ``row col value`` lines (0-based, upper triangle included) with a size header."""
    A = system.matrix.tocoo()
    with open(path, "w") as fh:
        fh.write(f"% {A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for i, j, v in zip(A.row, A.col, A.data):
            fh.write(f"{int(i)} {int(j)} {float(v)!r}\n")
