"""Study campaigns: parameter sweeps over meshes and thicknesses, run as
independent cases, then folded into rate and extrapolation tables."""
from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import postproc
from .assembly import assemble_buckling, assemble_mass, assemble_source, assemble_stiffness
from .errors import MfdError
from .generators import generate_mesh
from .local_forms import MaterialParams, SigmaTensor
from .postproc import StudyRecord
from .solve import solve_eig, solve_source
from .spaces import build_dof_map

log = logging.getLogger(__name__)

WORKERS_ENV = "MFDPLATE_WORKERS"
RANDOM_FAMILIES = ("T3", "T7")


def default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Case:
    """One (problem, mesh, thickness, boundary condition) computation."""

    kind: str
    family: str
    N: int
    t: float
    bc: str = "CCCC"
    seed: int | None = None
    support: str = "soft"
    E: float = 1.0
    nu: float = 0.3
    k: float = 5.0 / 6.0
    rho: float = 1.0
    sigma: str = "identity"
    count: int = 4
    scaling: str = "resultant"

    @property
    def material(self):
        return MaterialParams(E=self.E, nu=self.nu, t=self.t, k=self.k, rho=self.rho)

    @property
    def mesh_seed(self):
        if self.family in RANDOM_FAMILIES:
            return 1 if self.seed is None else self.seed
        return None


@lru_cache(maxsize=8)
def _mesh(family, N, seed):
    return generate_mesh(family, N, seed=seed)


def run_case(case: Case) -> StudyRecord:
    """Compute one study row; numerical failures are recorded, not raised."""
    rec = StudyRecord(case.family, case.N, float("nan"), case.t, case.bc, case.kind)
    try:
        mesh = _mesh(case.family, case.N, case.mesh_seed)
        rec.h = mesh.h
        mat = case.material
        dm = build_dof_map(mesh, case.bc, support=case.support)
        if case.kind == "source":
            ex = postproc.exact_solution(mat)
            beta, w, _ = solve_source(assemble_source(mesh, dm, mat, ex.g))
            rec.values.update(postproc.errors(beta, w, mesh, mat, ex))
        elif case.kind == "vibration":
            spec = solve_eig(assemble_stiffness(mesh, dm, mat), assemble_mass(mesh, dm, mat), case.count)
            om = postproc.nondim_frequency(spec.eigenvalues, mat)
            rec.values.update({f"mode{i + 1}": float(v) for i, v in enumerate(om)})
        elif case.kind == "buckling":
            B = assemble_buckling(mesh, dm, SigmaTensor.parse(case.sigma))
            spec = solve_eig(assemble_stiffness(mesh, dm, mat), B, case.count, mode="buckling")
            K = postproc.nondim_buckling(spec.eigenvalues, mat, scaling=case.scaling)
            rec.values.update({f"mode{i + 1}": float(v) for i, v in enumerate(K)})
        else:
            raise ValueError(f"unknown problem kind {case.kind!r}")
    except (MfdError, ValueError, np.linalg.LinAlgError) as exc:
        log.warning("case %s failed: %s", case, exc)
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def run_cases(cases, workers=None):
    """Run cases in parallel processes; results keep the input order."""
    workers = default_workers() if workers is None else workers
    cases = list(cases)
    if workers <= 1 or len(cases) <= 1:
        return [run_case(c) for c in cases]
    with ProcessPoolExecutor(max_workers=min(workers, len(cases))) as ex:
        return list(ex.map(run_case, cases))


# ---------------------------------------------------------------- tables

@dataclass
class Table:
    """Rows of mixed labels and numbers with per-column display kinds.

    Kinds: ``str``, ``int``, ``sci`` (errors), ``fix`` (eigen quantities),
    ``rate``.  CSV cells carry 6 significant digits; Markdown rounds the
    same numbers further for display.
    """

    title: str
    columns: list
    kinds: list
    rows: list = field(default_factory=list)

    def add(self, *cells):
        if len(cells) != len(self.columns):
            raise ValueError(f"row has {len(cells)} cells, table has {len(self.columns)} columns")
        self.rows.append(list(cells))

    @staticmethod
    def _csv_cell(v, kind):
        if v is None or (isinstance(v, float) and np.isnan(v)):
            return ""
        if kind in ("str", "int"):
            return str(v)
        return f"{float(v):.6g}"

    @staticmethod
    def _md_cell(v, kind):
        if v is None or (isinstance(v, float) and np.isnan(v)):
            return "--"
        if kind in ("str", "int"):
            return str(v)
        v = float(v)
        if kind == "sci":
            return f"{v:.3e}"
        if kind == "rate":
            return f"{v:.2f}"
        return f"{v:.4f}" if abs(v) < 1e4 else f"{v:.4e}"

    def write_csv(self, path_or_file):
        close = isinstance(path_or_file, (str, os.PathLike))
        fh = open(path_or_file, "w", newline="") if close else path_or_file
        try:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([self._csv_cell(v, k) for v, k in zip(r, self.kinds)])
        finally:
            if close:
                fh.close()

    def to_markdown(self):
        out = [f"**{self.title}**", "", "| " + " | ".join(self.columns) + " |",
               "|" + "|".join("---" for _ in self.columns) + "|"]
        for r in self.rows:
            out.append("| " + " | ".join(self._md_cell(v, k) for v, k in zip(r, self.kinds)) + " |")
        return "\n".join(out) + "\n"

    def column(self, name):
        j = self.columns.index(name)
        return [r[j] for r in self.rows]


def _failed_note(records):
    bad = [r for r in records if r.error]
    return "; ".join(f"{r.family} N={r.N} t={r.t:g}: {r.error}" for r in bad)


ERROR_KEYS = ("e_beta0", "e_w0", "e_beta1", "e_w1")


def source_table(records, title="Convergence analysis") -> Table:
    cols = ["Mesh", "N", "h"]
    kinds = ["str", "int", "sci"]
    for key in ERROR_KEYS:
        cols += [key, f"rc({key})"]
        kinds += ["sci", "rate"]
    tab = Table(title, cols, kinds)
    for fam in dict.fromkeys(r.family for r in records):
        rows = [r for r in records if r.family == fam and not r.error]
        prev = None
        for r in rows:
            cells = [fam, r.N, r.h]
            for key in ERROR_KEYS:
                e = r.values[key]
                rc = postproc.convergence_rate(prev.values[key], e, prev.h, r.h) if prev else None
                cells += [e, rc]
            tab.add(*cells)
            prev = r
        if len(rows) >= 2:
            hs = [r.h for r in rows]
            cells = [fam, "LS order", None]
            for key in ERROR_KEYS:
                p, _ = postproc.fit_error_order([r.values[key] for r in rows], hs)
                cells += [None, p]
            tab.rows.append(cells)
    return tab


def fitted_orders(records, family):
    rows = [r for r in records if r.family == family and not r.error]
    hs = [r.h for r in rows]
    return {key: postproc.fit_error_order([r.values[key] for r in rows], hs)[0] for key in ERROR_KEYS}


def locking_table(records, quantity="e_w1", title="Locking-free analysis") -> Table:
    ts = sorted(dict.fromkeys(r.t for r in records), reverse=True)
    tab = Table(title, ["Mesh", "N"] + [f"t={t:g}" for t in ts], ["str", "int"] + ["sci"] * len(ts))
    keys = dict.fromkeys((r.family, r.N) for r in records)
    for fam, N in keys:
        cells = [fam, N]
        for t in ts:
            hit = [r for r in records if (r.family, r.N, r.t) == (fam, N, t) and not r.error]
            cells.append(hit[0].values[quantity] if hit else None)
        tab.add(*cells)
    return tab


def eigen_table(records, count, label="K", reference=None, title="Eigenvalue study") -> Table:
    """Rows per (family, mode); columns per N, fitted order and extrapolated limit."""
    ns = sorted(dict.fromkeys(r.N for r in records))
    cols = ["Mesh", label] + [f"N={n}" for n in ns] + ["Order", "Extrap."]
    kinds = ["str", "str"] + ["fix"] * len(ns) + ["rate", "fix"]
    if reference is not None:
        cols.append("Reference")
        kinds.append("fix")
    tab = Table(title, cols, kinds)
    for fam in dict.fromkeys(r.family for r in records):
        rows = sorted((r for r in records if r.family == fam and not r.error), key=lambda r: r.N)
        for j in range(count):
            key = f"mode{j + 1}"
            vals = [r.values.get(key) for r in rows]
            by_n = {r.N: r.values.get(key) for r in rows}
            order = limit = None
            if len(rows) >= 3:
                ex = postproc.extrapolate(vals, [r.h for r in rows])
                order, limit = ex.order, ex.limit
            cells = [fam, f"{label}{j + 1}"] + [by_n.get(n) for n in ns] + [order, limit]
            if reference is not None:
                cells.append(reference[j] if j < len(reference) else None)
            tab.add(*cells)
    return tab


def extrapolated_limits(records, family, count):
    rows = sorted((r for r in records if r.family == family and not r.error), key=lambda r: r.N)
    hs = [r.h for r in rows]
    return [postproc.extrapolate([r.values[f"mode{j + 1}"] for r in rows], hs) for j in range(count)]


def thickness_table(records, title="Lowest buckling intensity with varying thickness") -> Table:
    """Rows per (family, t) plus a t -> 0 row: each N column is extrapolated
    in t, and that row is then extrapolated in h like the others."""
    ns = sorted(dict.fromkeys(r.N for r in records))
    cols = ["Mesh", "t"] + [f"N={n}" for n in ns] + ["Order", "Extrap."]
    kinds = ["str", "str"] + ["fix"] * len(ns) + ["rate", "fix"]
    tab = Table(title, cols, kinds)
    for fam in dict.fromkeys(r.family for r in records):
        fam_rows = [r for r in records if r.family == fam and not r.error]
        ts = sorted(dict.fromkeys(r.t for r in fam_rows), reverse=True)
        hs = {r.N: r.h for r in fam_rows}
        grid = {(r.N, r.t): r.values["mode1"] for r in fam_rows}
        for t in ts:
            vals = [grid.get((n, t)) for n in ns]
            order = limit = None
            if all(v is not None for v in vals) and len(ns) >= 3:
                ex = postproc.extrapolate(vals, [hs[n] for n in ns])
                order, limit = ex.order, ex.limit
            tab.add(fam, f"{t:g}", *vals, order, limit)
        zero = []
        for n in ns:
            seq = [grid.get((n, t)) for t in ts]
            if len(ts) >= 3 and all(v is not None for v in seq):
                zero.append(postproc.extrapolate(seq, ts).limit)
            else:
                zero.append(None)
        order = limit = None
        if len(ns) >= 3 and all(v is not None for v in zero):
            ex = postproc.extrapolate(zero, [hs[n] for n in ns])
            order, limit = ex.order, ex.limit
        tab.add(fam, "0 (extrap.)", *zero, order, limit)
    return tab


def thin_limit(records, family):
    """(per-N t->0 values, extrapolated limit) for one family."""
    tab = thickness_table([r for r in records if r.family == family])
    row = tab.rows[-1]
    return row[2:-2], row[-1]


# ---------------------------------------------------------------- campaigns

def source_cases(families, ns, t, seed=None, **mat):
    return [Case("source", f, n, t, "CCCC", seed, **mat) for f in families for n in ns]


def locking_cases(families, ns, ts, seed=None, **mat):
    return [Case("source", f, n, t, "CCCC", seed, **mat) for f in families for n in ns for t in ts]


def eigen_cases(kind, families, ns, t, bc, seed=None, support="soft", count=4, sigma="identity", **mat):
    return [Case(kind, f, n, t, bc, seed, support, sigma=sigma, count=count, **mat)
            for f in families for n in ns]


def thickness_cases(families, ns, ts, bc="CCCC", seed=None, sigma="identity", **mat):
    return [Case("buckling", f, n, t, bc, seed, sigma=sigma, count=1, **mat)
            for f in families for t in ts for n in ns]


def records_to_rows(records):
    return [r.as_row() for r in records]


__all__ = [
    "Case", "Table", "run_case", "run_cases", "source_table", "locking_table", "eigen_table",
    "thickness_table", "fitted_orders", "extrapolated_limits", "thin_limit", "source_cases",
    "locking_cases", "eigen_cases", "thickness_cases", "default_workers", "asdict", "replace",
]
