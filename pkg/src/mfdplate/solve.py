"""Linear solver for the source problem, generalized eigensolver for the
vibration and buckling problems, and discrete shear recovery."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import SparseSymSystem
from .errors import SolverError
from .local_forms import MaterialParams
from .spaces import DofMap, FieldVector, discrete_gradient, reduction

log = logging.getLogger(__name__)

BACKWARD_TOL = 1e-10
EIG_TOL = 1e-9
EIG_MAXITER = 500
ROUNDING_FACTOR = 64


def _matrix(A):
    return A.matrix if isinstance(A, SparseSymSystem) else A


def _split(x, dofmap: DofMap):
    full = dofmap.expand(x)
    return FieldVector("H", full[:, :2].copy()), FieldVector("W", full[:, 2].copy())


def _backward_error(A, x, b):
    r = b - A @ x
    anorm = spla.norm(A, np.inf) if sp.issparse(A) else np.linalg.norm(A, np.inf)
    denom = anorm * np.linalg.norm(x, np.inf) + np.linalg.norm(b, np.inf)
    return (np.linalg.norm(r, np.inf) / denom if denom > 0 else 0.0), r


def _factorize(A, pivoting=False):
    """Sparse LU.  SPD systems need no pivoting, so the default keeps the
    diagonal pivots of a symmetric fill-reducing ordering; ``pivoting=True``
    falls back to threshold partial pivoting."""
    A = sp.csc_matrix(A)
    try:
        if pivoting:
            return spla.splu(A, permc_spec="COLAMD")
        return spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                         options={"SymmetricMode": True})
    except RuntimeError as exc:
        if not pivoting:
            return _factorize(A, pivoting=True)
        raise SolverError(f"sparse factorization failed: {exc}", {"n": A.shape[0]}) from exc


def solve_linear(A, b, method="direct", refine=3):
    """Solve A x = b; returns (x, diagnostics).  Raises SolverError when the
    normwise backward error stays above ``BACKWARD_TOL``."""
    A = sp.csr_matrix(_matrix(A))
    b = np.asarray(b, dtype=float)
    diag = {"method": method, "n": A.shape[0]}
    if A.shape[0] == 0:
        return np.zeros(0), dict(diag, backward_error=0.0)
    if method == "direct":
        lu = _factorize(A)
        x = lu.solve(b)
        err, r = _backward_error(A, x, b)
        steps = 0
        while err > BACKWARD_TOL and steps < refine:
            x = x + lu.solve(r)
            err, r = _backward_error(A, x, b)
            steps += 1
        if err > BACKWARD_TOL or not np.all(np.isfinite(x)):
            lu = _factorize(A, pivoting=True)
            x = lu.solve(b)
            err, r = _backward_error(A, x, b)
            diag["pivoting"] = True
            while err > BACKWARD_TOL and steps < 2 * refine:
                x = x + lu.solve(r)
                err, r = _backward_error(A, x, b)
                steps += 1
        diag["refinement_steps"] = steps
    elif method == "cg":
        d = A.diagonal()
        if np.any(d <= 0):
            raise SolverError("CG requires a positive diagonal", diag)
        pre = sp.diags(1.0 / d)
        x, info = spla.cg(A, b, M=pre, rtol=1e-14, maxiter=20 * A.shape[0])
        diag["cg_info"] = info
        err, _ = _backward_error(A, x, b)
    else:
        raise ValueError(f"unknown linear solver {method!r}")
    diag["backward_error"] = float(err)
    if not np.all(np.isfinite(x)) or err > BACKWARD_TOL:
        raise SolverError(f"linear solve did not reach backward error {BACKWARD_TOL:g} (got {err:.3e})", diag)
    return x, diag


def solve_source(A: SparseSymSystem, f=None, method="direct"):
    """Solve the bending problem; returns (beta_h, w_h, diagnostics) with the
    lifted boundary values reinstated."""
    if f is None:
        f = A.rhs
    if f is None:
        raise ValueError("no right-hand side given")
    x, diag = solve_linear(A.matrix, f, method)
    beta, w = _split(x, A.dofmap)
    return beta, w, diag


@dataclass
class Spectrum:
    """Smallest finite eigenvalues of A x = lambda B x, ascending."""

    eigenvalues: np.ndarray
    vectors: np.ndarray                 # (n_free, count), B-normalised
    dofmap: DofMap | None = None
    mode: str = "vibration"
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.eigenvalues)

    def fields(self, i):
        """(beta, w) FieldVectors of the i-th mode (homogeneous lift)."""
        if self.dofmap is None:
            raise ValueError("spectrum carries no dof map")
        full = np.zeros(self.dofmap.index.shape)
        full.ravel()[self.dofmap.free_slots] = self.vectors[:, i]
        return FieldVector("H", full[:, :2].copy()), FieldVector("W", full[:, 2].copy())


def _select(mu, count):
    """Indices of the ``count`` largest positive mu (= smallest positive lambda)."""
    pos = np.flatnonzero(mu > 0)
    pos = pos[np.argsort(-mu[pos])]
    return pos[:count]


def _dense_pencil(A, B):
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    B = B.toarray() if sp.issparse(B) else np.asarray(B, dtype=float)
    mu, Y = sla.eigh(0.5 * (B + B.T), 0.5 * (A + A.T))
    return mu, Y


def dense_eigs(A, B, count):
    """Reference dense solver: the ``count`` smallest finite positive eigenvalues."""
    mu, Y = _dense_pencil(_matrix(A), _matrix(B))
    scale = np.abs(mu).max() if mu.size else 0.0
    mu = np.where(np.abs(mu) > 1e-13 * scale, mu, 0.0)
    sel = _select(mu, count)
    return 1.0 / mu[sel], Y[:, sel]


def _normalise(X, B):
    nrm = np.sqrt(np.einsum("ij,ij->j", X, B @ X))
    return X / nrm


def solve_eig(A, B, count=4, mode="vibration", tol=EIG_TOL, maxiter=EIG_MAXITER, seed=0) -> Spectrum:
    """Block shift-invert subspace iteration on A^{-1} B.

    Ritz values mu of the pencil (Q^T B Q, Q^T A Q) approximate 1/lambda;
    the kernel of B maps to mu = 0 and is never selected, so spurious
    infinite eigenvalues of the buckling pencil are excluded.

    A pair is converged when its relative residual is below ``tol``, or
    below the level at which rounding in A x itself dominates (thin plates
    make A very ill-conditioned).
    """
    dofmap = A.dofmap if isinstance(A, SparseSymSystem) else None
    Am = sp.csr_matrix(_matrix(A))
    Bm = sp.csr_matrix(_matrix(B))
    n = Am.shape[0]
    if Bm.nnz == 0 or not np.any(Bm.data):
        raise SolverError("right-hand matrix is identically zero", {"n": n})
    if mode not in ("vibration", "buckling"):
        raise ValueError(f"unknown eigen mode {mode!r}")
    p = count + 8 if mode == "vibration" else 2 * count + 8
    diag = {"n": n, "block": p, "mode": mode}
    if n <= 2 * p:
        lam, X = dense_eigs(Am, Bm, count)
        if len(lam) < count:
            raise SolverError(f"only {len(lam)} finite positive eigenvalues exist", diag)
        X = _normalise(X, Bm)
        res = np.linalg.norm(Am @ X - (Bm @ X) * lam, axis=0) / np.linalg.norm(Am @ X, axis=0)
        diag.update(iterations=0, residuals=res, dense=True)
        return Spectrum(lam, X, dofmap, mode, diag)

    lu = _factorize(Am)
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((n, p))
    res = np.full(count, np.inf)
    anorm = spla.norm(Am, np.inf)
    bnorm = spla.norm(Bm, np.inf)
    for it in range(1, maxiter + 1):
        W = lu.solve(Bm @ V)
        Q, _ = np.linalg.qr(W)
        AQ = Am @ Q
        Ah = Q.T @ AQ
        Bh = Q.T @ (Bm @ Q)
        mu, Y = sla.eigh(0.5 * (Bh + Bh.T), 0.5 * (Ah + Ah.T))
        order = np.argsort(-np.abs(mu))
        mu, Y = mu[order], Y[:, order]
        V = Q @ Y
        sel = _select(mu, count)
        if len(sel) == count:
            X = V[:, sel]
            lam = 1.0 / mu[sel]
            AX = Am @ X
            ax = np.linalg.norm(AX, axis=0)
            res = np.linalg.norm(AX - (Bm @ X) * lam, axis=0) / ax
            # relative size of the rounding error in evaluating the residual itself
            xn = np.linalg.norm(X, axis=0)
            floor = ROUNDING_FACTOR * np.finfo(float).eps * (anorm + np.abs(lam) * bnorm) * xn / ax
            if np.all(res <= np.maximum(tol, floor)):
                X = _normalise(X, Bm)
                diag.update(iterations=it, residuals=res, residual_floor=floor, dense=False)
                log.debug("eigensolver converged in %d iterations", it)
                return Spectrum(lam, X, dofmap, mode, diag)
    diag.update(iterations=maxiter, residuals=res)
    raise SolverError(f"eigensolver did not converge in {maxiter} iterations "
                      f"(max residual {np.max(res):.3e})", diag)


def recover_shear(beta: FieldVector, w: FieldVector, mat: MaterialParams, mesh, dofmap=None) -> FieldVector:
    """Scaled discrete shear kappa t^-2 (grad_h w - Pi_h beta), two-sided per cell edge."""
    g = discrete_gradient(w, mesh) - reduction(beta, mesh)
    return g * (mat.kappa / mat.t ** 2)
