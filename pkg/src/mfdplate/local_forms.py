"""Per-element matrices: bending, shear product, coupling, stiffness, load,
mass, buckling and the vertex quadrature weights.

Every builder works on a :class:`~mfdplate.mesh.BatchGeometry` holding
``nc`` cells with the same vertex count, so assembly can process a whole
group of cells with a handful of batched numpy calls.  Passing a single
:class:`~mfdplate.mesh.CellGeometry` returns the unbatched matrices.

Local dof order is all rotations (beta_x, beta_y per vertex) followed by
all deflections.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import DegenerateElementError, IllConditionedElementError, RankAmbiguityError
from .mesh import BatchGeometry, CellGeometry, batch_geometry

KSTAR_COND_MAX = 1e12
RANK_TOL = 1e-10
RANK_AMBIGUOUS = 1e-6


@dataclass(frozen=True)
class MaterialParams:
    E: float = 1.0
    nu: float = 0.3
    t: float = 0.01
    k: float = 5.0 / 6.0
    rho: float = 1.0

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError(f"Young modulus must be positive, got {self.E}")
        if not 0 < self.nu < 0.5:
            raise ValueError(f"Poisson ratio must lie in (0, 1/2), got {self.nu}")
        if not self.t > 0:
            raise ValueError(f"thickness must be positive, got {self.t}")
        if not self.k > 0:
            raise ValueError(f"shear correction factor must be positive, got {self.k}")
        if not self.rho > 0:
            raise ValueError(f"density must be positive, got {self.rho}")

    @property
    def kappa(self):
        return self.E * self.k / (2.0 * (1.0 + self.nu))

    @property
    def D(self):
        """Flexural rigidity."""
        return self.E * self.t ** 3 / (12.0 * (1.0 - self.nu ** 2))

    @property
    def bending_coef(self):
        return self.E / (12.0 * (1.0 - self.nu ** 2))

    def C(self, tau):
        tau = np.asarray(tau, dtype=float)
        tr = tau[..., 0, 0] + tau[..., 1, 1]
        return self.bending_coef * ((1 - self.nu) * tau + self.nu * tr[..., None, None] * np.eye(2))

    def with_(self, **kw):
        d = dict(E=self.E, nu=self.nu, t=self.t, k=self.k, rho=self.rho)
        d.update(kw)
        return MaterialParams(**d)


@dataclass(frozen=True)
class SigmaTensor:
    """Symmetric constant pre-stress with its rank classification.

    ``rank`` is inferred from the eigenvalues unless given explicitly; an
    eigenvalue ratio between ``RANK_TOL`` and ``RANK_AMBIGUOUS`` is refused.
    """

    matrix: np.ndarray
    rank: int | None = None
    kernel: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        s = np.array(self.matrix, dtype=float)
        if s.shape != (2, 2):
            raise ValueError(f"sigma must be 2x2, got shape {s.shape}")
        if abs(s[0, 1] - s[1, 0]) > 1e-14 * max(1.0, np.abs(s).max()):
            raise ValueError("sigma must be symmetric")
        s[1, 0] = s[0, 1]
        s.flags.writeable = False
        object.__setattr__(self, "matrix", s)
        lam, vec = np.linalg.eigh(s)
        order = np.argsort(np.abs(lam))
        lam, vec = lam[order], vec[:, order]
        big = abs(lam[1])
        rank = self.rank
        if big == 0.0:
            rank = 0
        elif rank is None:
            ratio = abs(lam[0]) / big
            if ratio <= RANK_TOL:
                rank = 1
            elif ratio < RANK_AMBIGUOUS:
                raise RankAmbiguityError(
                    f"sigma eigenvalue ratio {ratio:.2e} is close to the rank tolerance; "
                    "pass rank=1 or rank=2 explicitly")
            else:
                rank = 2
        elif rank not in (1, 2):
            raise ValueError(f"rank must be 1 or 2, got {rank}")
        object.__setattr__(self, "rank", rank)
        object.__setattr__(self, "kernel", vec[:, 0].copy() if rank <= 1 else None)

    @classmethod
    def identity(cls):
        return cls(np.eye(2))

    @classmethod
    def uniaxial(cls):
        return cls([[1.0, 0.0], [0.0, 0.0]])

    @classmethod
    def shear(cls):
        return cls([[0.0, 1.0], [1.0, 0.0]])

    @classmethod
    def parse(cls, spec):
        """``identity`` | ``uniaxial`` | ``shear`` | ``a,b,c`` (entries s11,s12,s22)."""
        if isinstance(spec, SigmaTensor):
            return spec
        if not isinstance(spec, str):
            return cls(spec)
        key = spec.strip().lower()
        named = {"identity": cls.identity, "i": cls.identity, "uniaxial": cls.uniaxial,
                 "shear": cls.shear}
        if key in named:
            return named[key]()
        parts = [float(p) for p in key.replace(";", ",").split(",")]
        if len(parts) != 3:
            raise ValueError(f"cannot parse sigma {spec!r}; use identity, uniaxial, shear or s11,s12,s22")
        return cls([[parts[0], parts[1]], [parts[1], parts[2]]])


@dataclass
class ElementMatrices:
    m: int
    M1: np.ndarray
    Mbar: np.ndarray
    C: np.ndarray
    M: np.ndarray
    b: np.ndarray
    D: np.ndarray
    B: np.ndarray | None
    omega: np.ndarray
    alpha: dict


def _as_batch(geom):
    if isinstance(geom, BatchGeometry):
        return geom, False
    if isinstance(geom, CellGeometry):
        return batch_geometry(geom.vertices[None]), True
    return batch_geometry(np.asarray(geom, dtype=float)[None]), True


def _unbatch(x, single):
    return x[0] if single else x


def _sym(a):
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _unit_columns(N):
    return N / np.linalg.norm(N, axis=1, keepdims=True)


def _projector(N):
    """I - N (N^T N)^{-1} N^T for a stack of full-column-rank N."""
    N = _unit_columns(N)                  # same range, better conditioned Gram matrix
    nt = np.swapaxes(N, 1, 2)
    G = nt @ N
    P = -N @ np.linalg.solve(G, nt)
    idx = np.arange(N.shape[1])
    P[:, idx, idx] += 1.0
    return _sym(P)


def _trace(a):
    return np.trace(a, axis1=-2, axis2=-1)


# ---------------------------------------------------------------- weights

def _linear_moments(g):
    return np.concatenate([np.ones_like(g.xb[..., :1]), g.xb], axis=2).transpose(0, 2, 1)  # (nc,3,m)


def _project(A, w, target):
    r = target - np.einsum("cij,cj->ci", A, w)
    lam = np.linalg.solve(A @ np.swapaxes(A, 1, 2), r[..., None])[..., 0]
    return w + np.einsum("cij,ci->cj", A, lam)


def _fan_weights(xb, area):
    """Barycentre-fan vertex rule with the centre share spread proportionally."""
    nxt = np.roll(xb, -1, axis=0)
    tri = 0.5 * (xb[:, 0] * nxt[:, 1] - nxt[:, 0] * xb[:, 1])
    w = (tri + np.roll(tri, 1)) / 3.0
    if np.any(w <= 0):
        w = np.full(len(xb), area / len(xb))
    return w + (area / 3.0) * w / w.sum()


def _lp_weights(A, target):
    m = A.shape[1]
    # maximise s subject to A w = target, w_i >= s
    c = np.zeros(m + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-np.eye(m), np.ones((m, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(m), A_eq=np.hstack([A, np.zeros((3, 1))]),
                  b_eq=target, bounds=[(None, None)] * (m + 1), method="highs")
    if not res.success or res.x[-1] <= 0:
        return None
    return res.x[:m]


def _weights(g, cell_ids=None):
    nc, m = len(g), g.m
    A = _linear_moments(g)
    target = np.zeros((nc, 3))
    target[:, 0] = g.area
    w = _project(A, np.repeat((g.area / m)[:, None], m, axis=1), target)
    floor = 1e-12 * (g.area / m)[:, None]
    for c in np.flatnonzero((w <= floor).any(1)):
        wc = _project(A[c:c + 1], _fan_weights(g.xb[c], g.area[c])[None], target[c:c + 1])[0]
        if np.any(wc <= floor[c]):
            wc = _lp_weights(A[c], target[c])
            if wc is None:
                cid = int(cell_ids[c]) if cell_ids is not None else int(c)
                raise DegenerateElementError(cid, "no positive vertex quadrature weights exist")
            wc = _project(A[c:c + 1], wc[None], target[c:c + 1])[0]
        w[c] = wc
    return w


def vertex_weights(geom):
    """Positive vertex weights integrating linear functions exactly on the cell."""
    g, single = _as_batch(geom)
    return _unbatch(_weights(g), single)


# ---------------------------------------------------------------- bending

def _bending_NR(g, mat: MaterialParams):
    nc, m = len(g), g.m
    x, y = g.xb[..., 0], g.xb[..., 1]
    one, zero = np.ones_like(x), np.zeros_like(x)
    q = np.stack([
        np.stack([one, zero], -1), np.stack([zero, one], -1),
        np.stack([y, -x], -1), np.stack([y, x], -1),
        np.stack([x, y], -1), np.stack([x, -y], -1),
    ], axis=-1)                                            # (nc, m, 2, 6)
    N = q.reshape(nc, 2 * m, 6)
    c = mat.bending_coef
    nu = mat.nu
    Ceps = np.zeros((6, 2, 2))
    Ceps[3] = c * (1 - nu) * np.array([[0.0, 1.0], [1.0, 0.0]])
    Ceps[4] = c * (1 + nu) * np.eye(2)
    Ceps[5] = c * (1 - nu) * np.diag([1.0, -1.0])
    hn = 0.5 * g.L[..., None] * g.n                        # (nc, m, 2)
    trac = np.einsum("jab,cmb->cmaj", Ceps, hn)            # edge i traction, (nc, m, 2, 6)
    R = (trac + np.roll(trac, 1, axis=1)).reshape(nc, 2 * m, 6)
    return N, R


def _bending(g, mat, alpha=None, cell_ids=None):
    N, R = _bending_NR(g, mat)
    K = np.swapaxes(N, 1, 2) @ R
    Ks = _sym(K[:, 3:, 3:])
    Nu = _unit_columns(N)
    cond = np.maximum(np.linalg.cond(Ks), np.linalg.cond(np.swapaxes(Nu, 1, 2) @ Nu))
    bad = ~(cond <= KSTAR_COND_MAX)
    if bad.any():
        k = int(np.flatnonzero(bad)[0])
        raise IllConditionedElementError(int(cell_ids[k]) if cell_ids is not None else k, float(cond[k]))
    Rs = R[:, :, 3:]
    cons = Rs @ np.linalg.solve(Ks, np.swapaxes(Rs, 1, 2))
    a = _trace(cons) / (2 * g.m) if alpha is None else np.broadcast_to(alpha, (len(g),))
    M = cons + a[:, None, None] * _projector(N)
    return _sym(M), N, R, a


def bending_matrix(geom, mat: MaterialParams, alpha=None, return_parts=False):
    """2m x 2m matrix of the local bending form (consistency M N = R)."""
    g, single = _as_batch(geom)
    M, N, R, a = _bending(g, mat, alpha)
    if return_parts:
        return tuple(_unbatch(v, single) for v in (M, N, R, a))
    return _unbatch(M, single)


# ---------------------------------------------------------------- shear

def _shear_NR(g):
    t = g.t
    Nb = np.stack([-t[..., 1], t[..., 0]], axis=-1)        # curl of x, curl of y, tangential
    mid = 0.5 * (g.xb + np.roll(g.xb, -1, axis=1))
    Rb = -g.L[..., None] * mid
    return Nb, Rb


def _shear_product(g, alpha=None):
    Nb, Rb = _shear_NR(g)
    Kb = _sym(np.swapaxes(Nb, 1, 2) @ Rb)
    cons = Rb @ np.linalg.solve(Kb, np.swapaxes(Rb, 1, 2))
    a = _trace(cons) / g.m if alpha is None else np.broadcast_to(alpha, (len(g),))
    M = cons + a[:, None, None] * _projector(Nb)
    return _sym(M), Nb, Rb, a


def shear_product_matrix(geom, mat: MaterialParams | None = None, alpha=None, return_parts=False):
    """m x m matrix of the local Gamma_h scalar product (consistency Mbar Nbar = Rbar)."""
    g, single = _as_batch(geom)
    M, Nb, Rb, a = _shear_product(g, alpha)
    if return_parts:
        return tuple(_unbatch(v, single) for v in (M, Nb, Rb, a))
    return _unbatch(M, single)


def _coupling(g):
    nc, m = len(g), g.m
    C = np.zeros((nc, m, 3 * m))
    i = np.arange(m)
    j = (i + 1) % m
    for comp in (0, 1):
        C[:, i, 2 * i + comp] = -0.5 * g.t[:, i, comp]
        C[:, i, 2 * j + comp] = -0.5 * g.t[:, i, comp]
    C[:, i, 2 * m + i] = -1.0 / g.L
    C[:, i, 2 * m + j] = 1.0 / g.L
    return C


def coupling_matrix(geom):
    """m x 3m matrix mapping local (rotations, deflections) to grad_h v - Pi_h eta."""
    g, single = _as_batch(geom)
    return _unbatch(_coupling(g), single)


def _stiffness(g, mat, alpha_bending=None, alpha_shear=None, cell_ids=None):
    m = g.m
    M1, _, _, a1 = _bending(g, mat, alpha_bending, cell_ids)
    Mb, _, _, a2 = _shear_product(g, alpha_shear)
    C = _coupling(g)
    A = (mat.kappa / mat.t ** 2) * (np.swapaxes(C, 1, 2) @ Mb @ C)
    A[:, :2 * m, :2 * m] += M1
    return _sym(A), {"bending": a1, "shear": a2}


def stiffness(geom, mat: MaterialParams, alpha_bending=None, alpha_shear=None):
    """3m x 3m local stiffness: bending embedded on rotations plus scaled shear part."""
    g, single = _as_batch(geom)
    A, _ = _stiffness(g, mat, alpha_bending, alpha_shear)
    return _unbatch(A, single)


# ---------------------------------------------------------------- right-hand sides

def load_vector(geom, omega, gbar):
    g, single = _as_batch(geom)
    omega = np.atleast_2d(omega)
    gbar = np.atleast_1d(np.asarray(gbar, dtype=float))
    b = np.zeros((len(g), 3 * g.m))
    b[:, 2 * g.m:] = gbar[:, None] * omega
    return _unbatch(b, single)


def mass_diagonal(omega, mat: MaterialParams):
    """Diagonal of the local mass matrix for a stack of weight vectors."""
    omega = np.atleast_2d(omega)
    rot = np.repeat(omega, 2, axis=1) * mat.t ** 2 / 12.0
    return np.concatenate([rot, omega], axis=1)


def mass_matrix(geom, omega, mat: MaterialParams):
    d = mass_diagonal(omega, mat)
    D = np.zeros(d.shape + (d.shape[-1],))
    idx = np.arange(d.shape[-1])
    D[:, idx, idx] = d
    return D[0] if np.ndim(omega) == 1 else D


# ---------------------------------------------------------------- buckling

def _buckling_basis(sigma: SigmaTensor):
    if sigma.rank == 1:
        a = sigma.kernel
        return a, np.array([-a[1], a[0]])
    return np.array([1.0, 0.0]), np.array([0.0, 1.0])


def _buckling(g, sigma: SigmaTensor, alpha=0.0):
    nc, m = len(g), g.m
    s = sigma.matrix
    a, b = _buckling_basis(sigma)
    grads = np.stack([np.zeros(2), a, b])                 # gradients of the three basis polynomials
    Nh = np.stack([np.ones((nc, m)), g.xb @ a, g.xb @ b], axis=-1)
    sg = grads @ s                                        # (3, 2) rows sigma grad q_j
    hn = 0.5 * g.L[..., None] * g.n
    ef = np.einsum("jk,cmk->cmj", sg, hn)                 # (nc, m, 3)
    Rh = ef + np.roll(ef, 1, axis=1)
    Rh[..., 0] = 0.0
    active = [2] if sigma.rank == 1 else ([1, 2] if sigma.rank == 2 else [])
    if sigma.rank == 1:
        Rh[..., 1] = 0.0
    B = np.zeros((nc, m, m))
    if active:
        Ra = Rh[..., active]
        Ka = np.swapaxes(Nh[..., active], 1, 2) @ Ra
        Ka = _sym(Ka)
        B = Ra @ np.linalg.solve(Ka, np.swapaxes(Ra, 1, 2))
    if alpha:
        B = B + alpha * _projector(Nh)
    return _sym(B), Nh, Rh


def buckling_matrix(geom, sigma, alpha=0.0, return_parts=False):
    """m x m local matrix of the pre-stress form on deflections (alpha = 0 by default)."""
    sigma = SigmaTensor.parse(sigma)
    g, single = _as_batch(geom)
    B, Nh, Rh = _buckling(g, sigma, alpha)
    if return_parts:
        return tuple(_unbatch(v, single) for v in (B, Nh, Rh))
    return _unbatch(B, single)


# ---------------------------------------------------------------- load averages

def _duffy_rule(n=3):
    """Collapsed Gauss rule on the reference triangle (0,0),(1,0),(0,1)."""
    x, w = np.polynomial.legendre.leggauss(n)
    x, w = 0.5 * (x + 1), 0.5 * w
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    xi = u.ravel()
    eta = (v * (1 - u)).ravel()
    wt = (wu * wv * (1 - u)).ravel()
    return np.column_stack([xi, eta]), wt


_TRI_PTS, _TRI_W = _duffy_rule(3)


def cell_averages(g, func):
    """Cell averages of a scalar field by barycentre-fan triangulation
    (signed, so valid on non-convex cells) and a collapsed Gauss rule exact to
    degree 4 on each triangle."""
    nc, m = len(g), g.m
    c = g.barycenter[:, None, :]
    p1, p2 = g.X, np.roll(g.X, -1, axis=1)
    e1, e2 = p1 - c, p2 - c
    det = e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0]        # 2 * signed area
    pts = (c[:, :, None, :] + e1[:, :, None, :] * _TRI_PTS[None, None, :, 0:1]
           + e2[:, :, None, :] * _TRI_PTS[None, None, :, 1:2])   # (nc, m, q, 2)
    vals = np.broadcast_to(func(pts[..., 0], pts[..., 1]), pts.shape[:-1])
    integral = ((vals * _TRI_W).sum(-1) * det).sum(-1)
    return integral / g.area


def element_matrices(geom, mat: MaterialParams, gbar=0.0, sigma=None):
    """All local matrices of one cell, bundled."""
    g, _ = _as_batch(geom)
    m = g.m
    omega = _weights(g)[0]
    M1, _, _, a1 = _bending(g, mat)
    Mb, _, _, a2 = _shear_product(g)
    C = _coupling(g)[0]
    A, _ = _stiffness(g, mat)
    b = load_vector(g, omega[None], gbar)[0]
    D = np.diag(mass_diagonal(omega, mat)[0])
    B = buckling_matrix(g, sigma)[0] if sigma is not None else None
    return ElementMatrices(m, M1[0], Mb[0], C, A[0], b, D, B, omega,
                           {"bending": float(a1[0]), "shear": float(a2[0]), "buckling": 0.0})
