"""Generators for the seven mesh families T1..T7 on the unit square.

``N`` is the number of elements along each side of the square.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import Voronoi

from .errors import MeshError
from .mesh import PolygonalMesh, is_convex, _shoelace

FAMILIES = ("T1", "T2", "T3", "T4", "T5", "T6", "T7")
RANDOMIZED = ("T3", "T7")


def generate_mesh(family: str, N: int, seed: int | None = None) -> PolygonalMesh:
    """Build a mesh of family ``T1``..``T7`` with ``N`` elements per side.

    The result is a pure function of ``(family, N, seed)``.  ``seed`` is
    mandatory for the randomised families T3 and T7 and ignored otherwise.
    """
    fam = str(family).upper()
    if fam not in FAMILIES:
        raise MeshError(f"unknown mesh family {family!r}; expected one of {', '.join(FAMILIES)}")
    N = int(N)
    if N < 2:
        raise MeshError(f"N must be at least 2, got {N}")
    if fam in RANDOMIZED and seed is None:
        raise MeshError(f"family {fam} is randomised and needs a seed")
    if fam == "T5" and N % 2:
        raise MeshError("T5 is built from 2x2 blocks of trapezoids; N must be even")
    builder = {
        "T1": _triangles, "T2": _hexagons, "T3": _voronoi, "T4": _squares,
        "T5": _trapezoids, "T6": _midpoint_hexagons, "T7": _perturbed_hexagons,
    }[fam]
    vertices, cells = builder(N, seed) if fam in RANDOMIZED else builder(N)
    return PolygonalMesh(vertices, cells, family=fam, n=N,
                         seed=seed if fam in RANDOMIZED else None)


def _grid(N):
    i, j = np.meshgrid(np.arange(N + 1), np.arange(N + 1), indexing="xy")
    return np.column_stack([i.ravel() / N, j.ravel() / N])


def _squares(N):
    idx = lambda i, j: j * (N + 1) + i  # noqa: E731
    cells = [[idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]
             for j in range(N) for i in range(N)]
    return _grid(N), cells


def _triangles(N):
    idx = lambda i, j: j * (N + 1) + i  # noqa: E731
    cells = []
    for j in range(N):
        for i in range(N):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            cells.append([a, b, c])
            cells.append([a, c, d])
    return _grid(N), cells


class _VertexPool:
    """Deduplicates vertices by an exact integer key."""

    def __init__(self):
        self.keys = {}
        self.xy = []

    def get(self, key, xy):
        v = self.keys.get(key)
        if v is None:
            v = len(self.xy)
            self.keys[key] = v
            self.xy.append(xy)
        return v

    def array(self):
        return np.array(self.xy, dtype=float)


def _trapezoids(N):
    # 2x2 blocks; inside a block the middle line zig-zags 1/3 -> 2/3 -> 1/3
    s = 2.0 / N
    pool = _VertexPool()
    local_y = (0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0)
    cells = []
    for bj in range(N // 2):
        for bi in range(N // 2):
            def v(kx, ly):
                key = (2 * bi + kx, 3 * bj + ly)
                return pool.get(key, ((bi + 0.5 * kx) * s, (bj + local_y[ly]) * s))
            A, B, C = v(0, 0), v(1, 0), v(2, 0)
            D, E, F = v(0, 1), v(1, 2), v(2, 1)
            G, H, I = v(0, 3), v(1, 3), v(2, 3)
            cells += [[A, B, E, D], [B, C, F, E], [D, E, H, G], [E, F, I, H]]
    xy = pool.array()
    xy[np.abs(xy - 1.0) < 1e-14] = 1.0
    return xy, cells


def _hexagons(N):
    # brick pattern; interior horizontal lines zig-zag so that bricks become hexagons
    w = 1.0 / N
    delta = 0.15 / N
    pool = _VertexPool()

    def on_line(j):
        if j == 0:
            return set(_row_corners(0, N))
        if j == N:
            return set(_row_corners(N - 1, N))
        return set(range(2 * N + 1))

    def vert(k, j):
        if 0 < j < N and 0 < k < 2 * N:
            dy = -delta if (k + j) % 2 == 1 else delta
        else:
            dy = 0.0
        return pool.get((k, j), (k * 0.5 * w, j * w + dy))

    cells = []
    for r in range(N):
        corners = _row_corners(r, N)
        low, up = on_line(r), on_line(r + 1)
        for kl, kr in zip(corners[:-1], corners[1:]):
            cyc = [vert(k, r) for k in range(kl, kr + 1) if k in low]
            cyc += [vert(k, r + 1) for k in range(kr, kl - 1, -1) if k in up]
            cells.append(cyc)
    return pool.array(), cells


def _row_corners(r, N):
    if r % 2 == 0:
        return list(range(0, 2 * N + 1, 2))
    return [0] + list(range(1, 2 * N, 2)) + [2 * N]


def _midpoint_refine(N):
    xy, tris = _triangles(N)
    pts = list(map(tuple, xy))
    mid = {}
    cells = []
    for tri in tris:
        cyc = []
        for i in range(3):
            a, b = tri[i], tri[(i + 1) % 3]
            key = (min(a, b), max(a, b))
            if key not in mid:
                mid[key] = len(pts)
                pts.append(tuple(0.5 * (xy[a] + xy[b])))
            cyc += [a, mid[key]]
        cells.append(cyc)
    return np.array(pts), cells, mid


def _midpoint_hexagons(N):
    xy, cells, _ = _midpoint_refine(N)
    return xy, cells


def _perturbed_hexagons(N, seed, amplitude=0.2, retries=8):
    base, cells, mid = _midpoint_refine(N)
    rng = np.random.default_rng(seed)
    keys = sorted(mid)
    u = rng.uniform(-1.0, 1.0, size=(len(keys), 2))
    ends = np.array(keys)
    d = base[ends[:, 1]] - base[ends[:, 0]]
    tang = d / np.linalg.norm(d, axis=1)[:, None]
    norm = np.column_stack([-tang[:, 1], tang[:, 0]])
    length = np.linalg.norm(d, axis=1)
    on_bnd = _on_boundary(base[ends[:, 0]]) & _on_boundary(base[ends[:, 1]]) & _same_side(
        base[ends[:, 0]], base[ends[:, 1]])
    across = np.where(on_bnd, 0.0, u[:, 1])
    disp = amplitude * length[:, None] * (u[:, :1] * tang + across[:, None] * norm)
    ids = np.array([mid[k] for k in keys])
    damp = 1.0
    for _ in range(retries):
        xy = base.copy()
        xy[ids] += damp * disp
        if all(_shoelace(xy[c]) > 0 and _simple(xy[c]) for c in cells):
            return xy, cells
        damp *= 0.5
    raise MeshError(f"T7 perturbation kept producing tangled cells after {retries} retries")


def _on_boundary(p, tol=1e-12):
    return (np.abs(p[:, 0]) < tol) | (np.abs(p[:, 0] - 1) < tol) | (np.abs(p[:, 1]) < tol) | (np.abs(p[:, 1] - 1) < tol)


def _same_side(p, q, tol=1e-12):
    return ((np.abs(p[:, 0] - q[:, 0]) < tol) & ((np.abs(p[:, 0]) < tol) | (np.abs(p[:, 0] - 1) < tol))) | (
        (np.abs(p[:, 1] - q[:, 1]) < tol) & ((np.abs(p[:, 1]) < tol) | (np.abs(p[:, 1] - 1) < tol)))


def _simple(xy):
    from .mesh import _segments_cross
    m = len(xy)
    for i in range(m):
        for j in range(i + 2, m):
            if i == 0 and j == m - 1:
                continue
            if _segments_cross(xy[i], xy[(i + 1) % m], xy[j], xy[(j + 1) % m]):
                return False
    return True


# -- T3: centroidal Voronoi ----------------------------------------------------

def _clipped_voronoi(pts):
    """Voronoi cells of ``pts`` clipped to the unit square by mirroring seeds."""
    n = len(pts)
    mirrors = [pts,
               np.column_stack([-pts[:, 0], pts[:, 1]]),
               np.column_stack([2 - pts[:, 0], pts[:, 1]]),
               np.column_stack([pts[:, 0], -pts[:, 1]]),
               np.column_stack([pts[:, 0], 2 - pts[:, 1]])]
    vor = Voronoi(np.vstack(mirrors))
    verts = vor.vertices.copy()
    for c in range(2):
        for target in (0.0, 1.0):
            close = np.abs(verts[:, c] - target) < 1e-10
            verts[close, c] = target
    regions = []
    for i in range(n):
        reg = vor.regions[vor.point_region[i]]
        if -1 in reg or len(reg) < 3:
            raise MeshError("unbounded Voronoi region inside the unit square")
        regions.append(list(reg))
    return verts, regions


def _order_ccw(verts, reg):
    xy = verts[reg]
    c = xy.mean(0)
    ang = np.arctan2(xy[:, 1] - c[1], xy[:, 0] - c[0])
    return [reg[k] for k in np.argsort(ang)]


def _centroids(verts, regions):
    out = np.empty((len(regions), 2))
    by_len = {}
    for i, reg in enumerate(regions):
        by_len.setdefault(len(reg), []).append(i)
    for m, ids in by_len.items():
        idx = np.array([regions[i] for i in ids])
        xy = verts[idx]
        c = xy.mean(1, keepdims=True)
        ang = np.arctan2(xy[..., 1] - c[..., 1], xy[..., 0] - c[..., 0])
        xy = np.take_along_axis(xy, np.argsort(ang, axis=1)[..., None], axis=1)
        nxt = np.roll(xy, -1, axis=1)
        cr = xy[..., 0] * nxt[..., 1] - nxt[..., 0] * xy[..., 1]
        a = 0.5 * cr.sum(1)
        out[ids] = ((xy + nxt) * cr[..., None]).sum(1) / (6 * a[:, None])
    return out


def _hex_lattice(N, rng, jitter=0.35):
    rows = max(2, int(round(2 * N / np.sqrt(3))))
    pts = []
    for r in range(rows):
        shift = 0.5 if r % 2 else 0.0
        cols = N if r % 2 == 0 else N - 1
        for c in range(cols):
            pts.append(((c + 0.5 + shift) / N, (r + 0.5) / rows))
    pts = np.array(pts)
    pts += jitter / N * rng.uniform(-0.5, 0.5, size=pts.shape)
    return np.clip(pts, 0.02 / N, 1 - 0.02 / N)


def _voronoi(N, seed, lloyd=20, short_edge=0.05):
    rng = np.random.default_rng(seed)
    # jittered hexagonal lattice relaxed towards a centroidal tessellation
    pts = _hex_lattice(N, rng)
    for _ in range(lloyd):
        verts, regions = _clipped_voronoi(pts)
        pts = _centroids(verts, regions)
    verts, regions = _clipped_voronoi(pts)
    cells = [_order_ccw(verts, r) for r in regions]

    # merge coincident Voronoi vertices, then compact numbering
    used = sorted({v for c in cells for v in c})
    remap = {}
    keep = []
    lookup = {}
    for v in used:
        key = tuple(np.round(verts[v] * 1e9).astype(np.int64))
        if key in lookup:
            remap[v] = lookup[key]
        else:
            lookup[key] = len(keep)
            remap[v] = len(keep)
            keep.append(verts[v])
    xy = np.array(keep)
    cells = [_dedupe([remap[v] for v in c]) for c in cells]
    xy, cells = _collapse_short_edges(xy, cells, short_edge / N)
    return xy, cells


def _dedupe(cyc):
    out = []
    for v in cyc:
        if not out or out[-1] != v:
            out.append(v)
    while len(out) > 1 and out[0] == out[-1]:
        out.pop()
    return out


def _boundary_rank(p, tol=1e-12):
    on_x = abs(p[0]) < tol or abs(p[0] - 1) < tol
    on_y = abs(p[1]) < tol or abs(p[1] - 1) < tol
    return int(on_x) + int(on_y)


def _collapse_short_edges(xy, cells, tol):
    """Collapse interior edges shorter than ``tol`` while every touched cell stays convex."""
    xy = xy.copy()
    cells = [list(c) for c in cells]
    touching = {}
    for ci, c in enumerate(cells):
        for v in c:
            touching.setdefault(v, set()).add(ci)
    cand = set()
    for c in cells:
        for k in range(len(c)):
            a, b = c[k], c[(k + 1) % len(c)]
            if np.linalg.norm(xy[a] - xy[b]) < tol:
                cand.add((min(a, b), max(a, b)))
    alive = np.ones(len(xy), dtype=bool)
    for a, b in sorted(cand, key=lambda e: np.linalg.norm(xy[e[0]] - xy[e[1]])):
        if not (alive[a] and alive[b]):
            continue
        ra, rb = _boundary_rank(xy[a]), _boundary_rank(xy[b])
        if ra and rb:
            continue
        if ra > rb:
            target = xy[a].copy()
        elif rb > ra:
            target = xy[b].copy()
        else:
            target = 0.5 * (xy[a] + xy[b])
        affected = touching[a] | touching[b]
        trial = {}
        ok = True
        saved = xy[a].copy()
        xy[a] = target
        for ci in affected:
            cyc = _dedupe([a if v == b else v for v in cells[ci]])
            if len(cyc) < 3 or not is_convex(xy[cyc]) or _shoelace(xy[cyc]) <= 0:
                ok = False
                break
            trial[ci] = cyc
        if not ok:
            xy[a] = saved
            continue
        for ci, cyc in trial.items():
            cells[ci] = cyc
        touching[a] = affected
        alive[b] = False
    keep = np.flatnonzero(alive)
    new = -np.ones(len(xy), dtype=np.int64)
    new[keep] = np.arange(len(keep))
    return xy[keep], [[int(new[v]) for v in c] for c in cells]
