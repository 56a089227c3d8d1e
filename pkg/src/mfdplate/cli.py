"""Command-line front end: mesh generation, single solves and study campaigns.

Settings are resolved as built-in defaults, then an optional INI file given
with ``--config``, then explicit flags.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import sys
from dataclasses import dataclass, fields, replace

import numpy as np

from . import postproc, study
from .assembly import assemble_buckling, assemble_mass, assemble_source, assemble_stiffness
from .errors import MfdError
from .generators import generate_mesh
from .local_forms import MaterialParams, SigmaTensor
from .mesh import export_mesh, validate_mesh
from .solve import recover_shear, solve_eig, solve_source
from .spaces import build_dof_map
from .vtk import cell_vectors_from_tangential, write_vtk

log = logging.getLogger("mfdplate")

KINDS = {"source": "source", "vibrate": "vibration", "buckle": "buckling"}


# ---------------------------------------------------------------- config

def parse_ns(text) -> tuple:
    """``8..128`` doubles from 8 up to 128; ``8,16,24`` is taken literally."""
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    text = str(text).strip()
    if ".." in text:
        lo, hi = (int(p) for p in text.split("..", 1))
        if lo < 1 or hi < lo:
            raise ValueError(f"bad N range {text!r}")
        out = [lo]
        while out[-1] * 2 <= hi:
            out.append(out[-1] * 2)
        return tuple(out)
    return tuple(int(p) for p in text.split(",") if p.strip())


def parse_floats(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(p) for p in str(text).split(",") if p.strip())


def parse_names(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(str(v).upper() for v in text)
    return tuple(p.strip().upper() for p in str(text).split(",") if p.strip())


@dataclass(frozen=True)
class StudyConfig:
    """All run settings.  Defaults: unit square, E = 1, nu = 0.3, k = 5/6."""

    kind: str = "source"
    families: tuple = ("T4",)
    ns: tuple = (8, 16, 32, 64)
    seed: int = 1
    E: float = 1.0
    nu: float = 0.3
    ts: tuple = (0.01,)
    k: float = 5.0 / 6.0
    rho: float = 1.0
    bc: str = "CCCC"
    support: str = "soft"
    sigma: str = "identity"
    modes: int = 4
    scaling: str = "resultant"
    csv: str | None = None
    markdown: str | None = None
    vtk: str | None = None

    SECTIONS = {
        "study": ("kind", "bc", "support", "sigma", "modes", "scaling"),
        "mesh": ("families", "ns", "seed"),
        "material": ("E", "nu", "ts", "k", "rho"),
        "output": ("csv", "markdown", "vtk"),
    }

    def __post_init__(self):
        conv = {"families": parse_names, "ns": parse_ns, "ts": parse_floats, "seed": int,
                "E": float, "nu": float, "k": float, "rho": float, "modes": int}
        for name, fn in conv.items():
            object.__setattr__(self, name, fn(getattr(self, name)))
        object.__setattr__(self, "bc", str(self.bc).upper())
        if self.kind not in ("source", "vibration", "buckling"):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if not self.families or not self.ns or not self.ts:
            raise ValueError("families, ns and ts must be non-empty")
        if self.modes < 1:
            raise ValueError("modes must be at least 1")
        if self.scaling not in postproc.BUCKLING_SCALINGS:
            raise ValueError(f"scaling must be one of {sorted(postproc.BUCKLING_SCALINGS)}")
        MaterialParams(E=self.E, nu=self.nu, t=self.ts[0], k=self.k, rho=self.rho)
        SigmaTensor.parse(self.sigma)

    def material(self, t=None) -> MaterialParams:
        return MaterialParams(E=self.E, nu=self.nu, t=self.ts[0] if t is None else t, k=self.k, rho=self.rho)

    @staticmethod
    def _fmt(v):
        if isinstance(v, tuple):
            return ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        return repr(v) if isinstance(v, float) else str(v)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        for sec, names in self.SECTIONS.items():
            cp[sec] = {n: self._fmt(getattr(self, n)) for n in names if getattr(self, n) is not None}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text, base=None) -> "StudyConfig":
        cp = configparser.ConfigParser()
        cp.optionxform = str
        cp.read_string(text)
        known = {n: sec for sec, names in cls.SECTIONS.items() for n in names}
        aliases = {"family": "families", "n": "ns", "t": "ts", "md": "markdown"}
        kw = {}
        for sec in cp.sections():
            if sec not in cls.SECTIONS:
                raise ValueError(f"unknown config section [{sec}]")
            for key, val in cp[sec].items():
                name = aliases.get(key, key)
                if name not in known:
                    raise ValueError(f"unknown config key {key!r} in [{sec}]")
                kw[name] = val
        return replace(base or cls(), **kw)

    @classmethod
    def load(cls, path, base=None) -> "StudyConfig":
        with open(path) as fh:
            return cls.from_ini(fh.read(), base)


FIELD_NAMES = {f.name for f in fields(StudyConfig)}


# ---------------------------------------------------------------- output helpers

def _write_rows(path, rows):
    keys = list(dict.fromkeys(k for r in rows for k in r))
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6g}" if isinstance(v, float) else v) for k, v in r.items()})


def _emit_table(table: study.Table, cfg: StudyConfig, out):
    out.write(table.to_markdown())
    if cfg.markdown:
        with open(cfg.markdown, "w") as fh:
            fh.write(table.to_markdown())
    if cfg.csv:
        table.write_csv(cfg.csv)


# ---------------------------------------------------------------- commands

def cmd_mesh(args, cfg: StudyConfig, out=sys.stdout):
    fam = cfg.families[0]
    n = cfg.ns[0]
    mesh = generate_mesh(fam, n, seed=cfg.seed)
    report = validate_mesh(mesh)
    path = args.out or f"{fam}_{n}.mesh"
    export_mesh(mesh, path)
    out.write(f"wrote {path}\n")
    out.write(report.summary() + "\n")
    if not report.ok:
        raise MfdError("generated mesh failed validation")
    return 0


def cmd_solve(args, cfg: StudyConfig, out=sys.stdout):
    kind = cfg.kind
    fam, n = cfg.families[0], cfg.ns[0]
    mat = cfg.material()
    mesh = generate_mesh(fam, n, seed=cfg.seed)
    dm = build_dof_map(mesh, cfg.bc, support=cfg.support)
    row = {"family": fam, "N": n, "h": mesh.h, "t": mat.t, "bc": cfg.bc}
    if kind == "source":
        ex = postproc.exact_solution(mat)
        beta, w, diag = solve_source(assemble_source(mesh, dm, mat, ex.g))
        errs = postproc.errors(beta, w, mesh, mat, ex)
        row.update(errs)
        out.write(" ".join(f"{k}={v:.6g}" for k, v in errs.items()) + "\n")
        if cfg.vtk:
            gamma = recover_shear(beta, w, mat, mesh)
            write_vtk(cfg.vtk, mesh, point_data={"w": w.values, "beta": beta.values},
                      cell_data={"shear": cell_vectors_from_tangential(gamma.values, mesh)})
    else:
        A = assemble_stiffness(mesh, dm, mat)
        if kind == "vibration":
            spec = solve_eig(A, assemble_mass(mesh, dm, mat), cfg.modes)
            vals = np.atleast_1d(postproc.nondim_frequency(spec.eigenvalues, mat))
            label = "omega"
        else:
            B = assemble_buckling(mesh, dm, SigmaTensor.parse(cfg.sigma))
            spec = solve_eig(A, B, cfg.modes, mode="buckling")
            vals = np.atleast_1d(postproc.nondim_buckling(spec.eigenvalues, mat, scaling=cfg.scaling))
            label = "K"
        for i, v in enumerate(vals):
            row[f"{label}{i + 1}"] = float(v)
        out.write(" ".join(f"{label}{i + 1}={v:.6g}" for i, v in enumerate(vals)) + "\n")
        if cfg.vtk:
            pdata = {}
            for i in range(len(spec)):
                b, wv = spec.fields(i)
                pdata[f"w_mode{i + 1}"] = wv.values
                pdata[f"beta_mode{i + 1}"] = b.values
            write_vtk(cfg.vtk, mesh, point_data=pdata)
    if cfg.csv:
        _write_rows(cfg.csv, [row])
    return 0


def cmd_study(args, cfg: StudyConfig, out=sys.stdout):
    which = args.study
    workers = args.workers
    mat = dict(E=cfg.E, nu=cfg.nu, k=cfg.k, rho=cfg.rho)
    if which == "source":
        recs = study.run_cases(study.source_cases(cfg.families, cfg.ns, cfg.ts[0], cfg.seed, **mat), workers)
        table = study.source_table(recs, f"Convergence analysis, t = {cfg.ts[0]:g}")
    elif which == "locking":
        recs = study.run_cases(study.locking_cases(cfg.families, cfg.ns, cfg.ts, cfg.seed, **mat), workers)
        table = study.locking_table(recs, args.quantity, f"Locking-free analysis of {args.quantity}")
    elif which in ("vibrate", "buckle"):
        kind = KINDS[which]
        cases = study.eigen_cases(kind, cfg.families, cfg.ns, cfg.ts[0], cfg.bc, cfg.seed, cfg.support,
                                  cfg.modes, cfg.sigma, **mat)
        recs = study.run_cases([replace(c, scaling=cfg.scaling) for c in cases], workers)
        label = "omega" if kind == "vibration" else "K"
        table = study.eigen_table(recs, cfg.modes, label,
                                  title=f"{kind.capitalize()} {cfg.bc}, t = {cfg.ts[0]:g}")
    elif which == "buckle-thickness":
        cases = study.thickness_cases(cfg.families, cfg.ns, cfg.ts, cfg.bc, cfg.seed, cfg.sigma, **mat)
        cases = [replace(c, support=cfg.support, scaling=cfg.scaling) for c in cases]
        recs = study.run_cases(cases, workers)
        table = study.thickness_table(recs, f"Lowest buckling intensity {cfg.bc}, varying thickness")
    else:  # pragma: no cover - argparse restricts choices
        raise ValueError(f"unknown study {which!r}")
    _emit_table(table, cfg, out)
    failed = [r for r in recs if r.error]
    for r in failed:
        out.write(f"FAILED {r.family} N={r.N} t={r.t:g}: {r.error}\n")
    return 1 if failed and len(failed) == len(recs) else 0


# ---------------------------------------------------------------- parser

STUDY_DEFAULTS = {
    "source": dict(kind="source", families=("T2", "T3", "T4", "T5"), ns=(8, 16, 32, 64), ts=(0.01,)),
    "locking": dict(kind="source", families=("T4",), ns=(8, 16, 32, 64), ts=(1e-2, 1e-3, 1e-4, 1e-5)),
    "vibrate": dict(kind="vibration", families=("T4",), ns=(16, 32, 64), ts=(0.1,)),
    "buckle": dict(kind="buckling", families=("T4",), ns=(16, 32, 64), ts=(0.01,)),
    "buckle-thickness": dict(kind="buckling", families=("T4",), ns=(16, 32, 64),
                             ts=(0.1, 0.01, 0.001, 0.0001), modes=1),
}


def _common(p, many=False):
    g = p.add_argument_group("mesh")
    if many:
        g.add_argument("--families", "--family", dest="families", help="comma list, e.g. T2,T4")
        g.add_argument("--ns", "--n", dest="ns", help="8..128 (doubling) or a comma list")
    else:
        g.add_argument("--family", dest="families", help="mesh family T1..T7")
        g.add_argument("--n", dest="ns", help="elements per side")
    g.add_argument("--seed", type=int, help="seed of the randomised families (default 1)")
    m = p.add_argument_group("material")
    m.add_argument("--E", type=float, dest="E")
    m.add_argument("--nu", type=float)
    if many:
        m.add_argument("--ts", "--t", dest="ts", help="thickness or comma list")
    else:
        m.add_argument("--t", dest="ts", help="thickness")
    m.add_argument("--k", type=float, help="shear correction factor")
    m.add_argument("--rho", type=float)
    s = p.add_argument_group("problem")
    s.add_argument("--bc", help="4 letters C/S/F for left, right, bottom, top")
    s.add_argument("--support", choices=("soft", "hard"), help="simple support variant")
    s.add_argument("--sigma", help="identity | uniaxial | shear | s11,s12,s22")
    s.add_argument("--modes", type=int, help="number of eigenpairs")
    s.add_argument("--scaling", choices=sorted(postproc.BUCKLING_SCALINGS), help="buckling intensity scaling")
    o = p.add_argument_group("output")
    o.add_argument("--csv", help="CSV output path")
    o.add_argument("--vtk", help="VTK output path")
    o.add_argument("--config", help="INI file with [study] [mesh] [material] [output] sections")
    return p


def build_parser():
    parser = argparse.ArgumentParser(prog="mfdplate", description="Reissner-Mindlin plate solver on polygonal meshes")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    pm = _common(sub.add_parser("mesh", help="generate, validate and write a mesh"))
    pm.add_argument("--out", help="output path (default <family>_<n>.mesh)")

    ps = sub.add_parser("solve", help="run one case")
    ps_sub = ps.add_subparsers(dest="problem", required=True)
    for name in KINDS:
        _common(ps_sub.add_parser(name))

    pt = sub.add_parser("study", help="run a parameter study and print a table")
    pt_sub = pt.add_subparsers(dest="study", required=True)
    for name in STUDY_DEFAULTS:
        sp = _common(pt_sub.add_parser(name), many=True)
        sp.add_argument("--md", dest="markdown", help="Markdown output path")
        sp.add_argument("--workers", type=int, default=None, help="parallel processes (env MFDPLATE_WORKERS)")
        if name == "locking":
            sp.add_argument("--quantity", default="e_w1", choices=study.ERROR_KEYS)
    return parser


def resolve_config(args) -> StudyConfig:
    if args.command == "study":
        base = StudyConfig(**STUDY_DEFAULTS[args.study])
    elif args.command == "solve":
        base = StudyConfig(kind=KINDS[args.problem], families=("T4",), ns=(16,),
                           ts=(0.1,) if args.problem != "source" else (0.01,))
    else:
        base = StudyConfig()
    if args.config:
        base = StudyConfig.load(args.config, base)
    over = {k: v for k, v in vars(args).items() if k in FIELD_NAMES and v is not None}
    cfg = replace(base, **over)
    if args.command == "mesh" and args.families is None and not (args.config and _has_family(args.config)):
        raise ValueError("mesh: --family is required")
    return cfg


def _has_family(path):
    cp = configparser.ConfigParser()
    cp.read(path)
    return cp.has_option("mesh", "families") or cp.has_option("mesh", "family")


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        handler = {"mesh": cmd_mesh, "solve": cmd_solve, "study": cmd_study}[args.command]
        return handler(args, cfg, out)
    except MfdError as exc:
        diag = getattr(exc, "diagnostics", None)
        print(f"error: {exc}", file=sys.stderr)
        if diag:
            print(f"diagnostics: {diag}", file=sys.stderr)
        return 1
    except (ValueError, configparser.Error, OSError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
