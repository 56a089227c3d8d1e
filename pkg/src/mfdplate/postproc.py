"""Manufactured solution, discrete error measures, convergence rates,
least-squares extrapolation and non-dimensional eigenvalue maps."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from . import local_forms as lf
from .errors import MfdError
from .mesh import PolygonalMesh, mesh_batches
from .spaces import FieldVector, interp_scalar, interp_vector


class ExactSolution(NamedTuple):
    w: Callable
    beta: Callable
    g: Callable


def exact_solution(mat: lf.MaterialParams) -> ExactSolution:
    """Polynomial solution of the clamped plate on the unit square.

    The thickness correction of ``w`` is written for a general shear factor
    ``k``; it reduces to ``2 t^2 / (5 (1 - nu))`` at ``k = 5/6``.
    """
    nu, t, k = mat.nu, mat.t, mat.k
    coef = mat.bending_coef
    corr = t ** 2 / (3.0 * k * (1.0 - nu))

    def w(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        px, py = x * (x - 1), y * (y - 1)
        qx, qy = 5 * x ** 2 - 5 * x + 1, 5 * y ** 2 - 5 * y + 1
        return (px ** 3 * py ** 3 / 3.0
                - corr * (py ** 3 * px * qx + px ** 3 * py * qy))

    def beta(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        px, py = x * (x - 1), y * (y - 1)
        return py ** 3 * px ** 2 * (2 * x - 1), px ** 3 * py ** 2 * (2 * y - 1)

    def g(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        px, py = x * (x - 1), y * (y - 1)
        qx, qy = 5 * x ** 2 - 5 * x + 1, 5 * y ** 2 - 5 * y + 1
        return coef * (12 * py * qx * (2 * py ** 2 + px * qy)
                       + 12 * px * qy * (2 * px ** 2 + py * qx))

    return ExactSolution(w, beta, g)


# ---------------------------------------------------------------- discrete energies

def bending_energy(eta: FieldVector, mesh: PolygonalMesh, mat: lf.MaterialParams) -> float:
    """a_h(eta, eta) summed over all cells, boundary vertices included."""
    total = 0.0
    for ids, conn, g in mesh_batches(mesh):
        M1, _, _, _ = lf._bending(g, mat, cell_ids=ids)
        e = eta.values[conn].reshape(len(ids), -1)
        total += float(np.einsum("ci,cij,cj->", e, M1, e))
    return total


def gamma_energy_of_gradient(v: FieldVector, mesh: PolygonalMesh) -> float:
    """[grad_h v, grad_h v] with the local shear product matrices."""
    total = 0.0
    for ids, conn, g in mesh_batches(mesh):
        Mb, _, _, _ = lf._shear_product(g)
        vals = v.values[conn]
        d = (np.roll(vals, -1, axis=1) - vals) / g.L
        total += float(np.einsum("ci,cij,cj->", d, Mb, d))
    return total


def errors(beta_h: FieldVector, w_h: FieldVector, mesh: PolygonalMesh, mat: lf.MaterialParams,
           exact: ExactSolution | None = None) -> dict:
    """Relative discrete errors against the interpolated exact solution:
    e_beta0, e_w0 (max norms) and e_beta1, e_w1 (energy-type)."""
    ex = exact or exact_solution(mat)
    bI = interp_vector(ex.beta, mesh)
    wI = interp_scalar(ex.w, mesh)
    db = bI - beta_h
    dw = wI - w_h
    den_b0 = np.abs(bI.values).max()
    den_w0 = np.abs(wI.values).max()
    den_b1 = bending_energy(bI, mesh, mat)
    den_w1 = gamma_energy_of_gradient(wI, mesh)
    if min(den_b0, den_w0, den_b1, den_w1) <= 0:
        raise MfdError("exact solution is identically zero on this mesh; relative errors undefined")
    return {
        "e_beta0": float(np.abs(db.values).max() / den_b0),
        "e_w0": float(np.abs(dw.values).max() / den_w0),
        "e_beta1": float(math.sqrt(max(bending_energy(db, mesh, mat), 0.0) / den_b1)),
        "e_w1": float(math.sqrt(max(gamma_energy_of_gradient(dw, mesh), 0.0) / den_w1)),
    }


# ---------------------------------------------------------------- rates and fits

def convergence_rate(e, e_prime, h, h_prime) -> float:
    if min(e, e_prime, h, h_prime) <= 0:
        raise ValueError("errors and mesh sizes must be positive")
    if h == h_prime:
        raise ValueError("mesh sizes must differ")
    return math.log(e / e_prime) / math.log(h / h_prime)


def rates(errs, hs):
    """Consecutive rates; the first entry is None."""
    out = [None]
    for i in range(1, len(errs)):
        out.append(convergence_rate(errs[i - 1], errs[i], hs[i - 1], hs[i]))
    return out


@dataclass
class Extrapolation:
    order: float
    limit: float
    C: float = float("nan")
    residual: float = 0.0
    flags: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.flags


P_RANGE = (0.05, 8.0)


def _ls_fixed_p(h, v, p):
    A = np.column_stack([np.ones_like(h), h ** p])
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    r = v - A @ coef
    return coef, float(np.sqrt(r @ r))


def extrapolate(values, hs, resid_tol=1e-3) -> Extrapolation:
    """Fit values ~ limit + C h^order by least squares.

    The order is found by a coarse scan over ``P_RANGE`` followed by a
    golden-section refinement of the residual norm; the inner problem in
    (limit, C) is linear.
    """
    v = np.asarray(values, dtype=float)
    h = np.asarray(hs, dtype=float)
    if v.size < 3 or v.size != h.size:
        raise ValueError("extrapolation needs at least 3 (h, value) pairs")
    if np.any(np.diff(h) >= 0):
        raise ValueError("mesh sizes must be strictly decreasing")
    scale = max(np.abs(v).max(), 1e-300)
    if np.ptp(v) <= 1e-13 * scale:
        return Extrapolation(float("nan"), float(v.mean()), 0.0, 0.0, ["order undetermined: constant data"])
    hn = h / h[0]                                         # conditioning
    grid = np.linspace(*P_RANGE, 400)
    res = np.array([_ls_fixed_p(hn, v, p)[1] for p in grid])
    i = int(np.argmin(res))
    flags = []
    if i in (0, len(grid) - 1):
        p = float(grid[i])
        flags.append("order at the edge of the search range")
    else:
        f = lambda p: _ls_fixed_p(hn, v, p)[1]
        sol = minimize_scalar(f, bracket=(grid[i - 1], grid[i], grid[i + 1]), method="golden",
                              options={"xtol": 1e-13})
        p = float(sol.x)
    (limit, Cn), r = _ls_fixed_p(hn, v, p)
    C = Cn / h[0] ** p
    if r > resid_tol * max(abs(limit), 1e-300):
        flags.append(f"poor fit: residual {r:.2e}")
    return Extrapolation(p, float(limit), float(C), r, flags)


def fit_error_order(errs, hs):
    """Least-squares slope of log e against log h; returns (order, C)."""
    e = np.asarray(errs, dtype=float)
    h = np.asarray(hs, dtype=float)
    if np.any(e <= 0) or np.any(h <= 0):
        raise ValueError("errors and mesh sizes must be positive")
    p, logc = np.polyfit(np.log(h), np.log(e), 1)
    return float(p), float(np.exp(logc))


# ---------------------------------------------------------------- non-dimensional maps

def nondim_frequency(lam, mat: lf.MaterialParams, L=1.0):
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("eigenvalues must be non-negative")
    omega = mat.t * np.sqrt(lam / mat.rho)
    out = omega * L * np.sqrt(2 * (1 + mat.nu) * mat.rho / mat.E)
    return float(out) if out.ndim == 0 else out


BUCKLING_SCALINGS = {"resultant": 3, "stress": 2}


def nondim_buckling(lam_bp, mat: lf.MaterialParams, L=1.0, scaling="resultant"):
    """Buckling intensity K = lam_bc L / (pi^2 D).

    With the plate equations divided through by t^3, the critical in-plane
    force resultant is ``lam_bc = lam_bp t^3`` (``scaling="resultant"``,
    the default, which reproduces the reference intensities).
    ``scaling="stress"`` uses ``lam_bc = lam_bp t^2`` instead, which makes
    K a factor 1/t larger.
    """
    if scaling not in BUCKLING_SCALINGS:
        raise ValueError(f"scaling must be one of {sorted(BUCKLING_SCALINGS)}")
    lam_bp = np.asarray(lam_bp, dtype=float)
    if np.any(lam_bp <= 0):
        raise ValueError("buckling eigenvalues must be positive")
    out = lam_bp * mat.t ** BUCKLING_SCALINGS[scaling] * L / (math.pi ** 2 * mat.D)
    return float(out) if out.ndim == 0 else out


@dataclass
class StudyRecord:
    family: str
    N: int
    h: float
    t: float
    bc: str
    kind: str
    values: dict = field(default_factory=dict)
    error: str | None = None

    def as_row(self):
        row = {"family": self.family, "N": self.N, "h": self.h, "t": self.t, "bc": self.bc, "kind": self.kind}
        row.update(self.values)
        if self.error:
            row["error"] = self.error
        return row
