import types

import numpy as np
import pytest
from conftest import polygon_moment, random_polygon
from hypothesis import given, settings
from hypothesis import strategies as st

from mfdplate import local_forms as lf
from mfdplate.errors import DegenerateElementError, IllConditionedElementError, RankAmbiguityError
from mfdplate.mesh import batch_geometry, polygon_geometry

MAT = lf.MaterialParams(E=1.0, nu=0.3, t=0.01)
UNIT = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)
PENTAGON = np.array([[0.0, 0.0], [1.3, 0.1], [1.7, 0.9], [0.6, 1.4], [-0.2, 0.7]])


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


# ---------------------------------------------------------------- material and sigma

def test_material_validation():
    with pytest.raises(ValueError):
        lf.MaterialParams(nu=0.5)
    with pytest.raises(ValueError):
        lf.MaterialParams(t=0.0)
    with pytest.raises(ValueError):
        lf.MaterialParams(k=-1)
    m = lf.MaterialParams(E=2.0, nu=0.25, t=0.1)
    assert np.isclose(m.D, 2.0 * 0.1 ** 3 / (12 * (1 - 0.25 ** 2)))
    assert np.isclose(m.kappa, 2.0 * (5 / 6) / 2.5)
    assert m.with_(t=0.2).t == 0.2


def test_sigma_parsing_and_rank():
    assert lf.SigmaTensor.parse("identity").rank == 2
    u = lf.SigmaTensor.parse("uniaxial")
    assert u.rank == 1 and np.allclose(np.abs(u.kernel), [0, 1])
    assert lf.SigmaTensor.parse("shear").rank == 2
    assert lf.SigmaTensor.parse("1,0,0").rank == 1
    assert lf.SigmaTensor.parse("0,0,0").rank == 0
    with pytest.raises(ValueError):
        lf.SigmaTensor.parse("1,2")
    with pytest.raises(ValueError):
        lf.SigmaTensor([[1, 2], [0, 1]])


def test_sigma_rank_ambiguity():
    with pytest.raises(RankAmbiguityError):
        lf.SigmaTensor([[1.0, 0.0], [0.0, 1e-8]])
    assert lf.SigmaTensor([[1.0, 0.0], [0.0, 1e-8]], rank=2).rank == 2
    assert lf.SigmaTensor([[1.0, 0.0], [0.0, 1e-12]]).rank == 1


# ---------------------------------------------------------------- weights

def _moments_ok(xy, w, tol=1e-13):
    area = polygon_moment(xy, 0, 0)
    scale = area * np.abs(xy).max()
    return (abs(w.sum() - area) <= tol * area
            and abs(w @ xy[:, 0] - polygon_moment(xy, 1, 0)) <= tol * scale
            and abs(w @ xy[:, 1] - polygon_moment(xy, 0, 1)) <= tol * scale)


def test_weights_unit_square():
    assert np.allclose(lf.vertex_weights(UNIT), 0.25, atol=1e-15)


def test_weights_triangle(rng):
    tri = random_polygon(rng, 3)
    assert np.allclose(lf.vertex_weights(tri), polygon_moment(tri, 0, 0) / 3, rtol=1e-13)


def test_weights_pentagon_against_green():
    w = lf.vertex_weights(PENTAGON)
    assert np.all(w > 0)
    assert _moments_ok(PENTAGON, w, 1e-14)


@settings(max_examples=150, deadline=None)
@given(st.integers(3, 10), st.integers(0, 2 ** 32 - 1))
def test_weights_positive_and_exact(m, seed):
    xy = random_polygon(np.random.default_rng(seed), m)
    w = lf.vertex_weights(xy)
    assert np.all(w > 0)
    assert _moments_ok(xy, w, 1e-12)


def test_weights_fallback_on_hard_cell():
    # long thin notch: uniform start and plain projection give a negative weight
    xy = np.array([[0, 0], [4, 0], [4, 1], [0.2, 1], [0.1, 0.05], [0, 1]], float)
    w = lf.vertex_weights(xy)
    assert np.all(w > 0) and _moments_ok(xy, w, 1e-12)


# ---------------------------------------------------------------- bending

def test_bending_consistency_and_kernel(rng):
    for _ in range(50):
        xy = random_polygon(rng, int(rng.integers(3, 11)))
        M, N, R, a = lf.bending_matrix(xy, MAT, return_parts=True)
        assert rel(M @ N, R) < 1e-12
        assert np.abs(R[:, :3]).max() == 0.0
        assert abs(N[:, 2] @ M @ N[:, 2]) < 1e-12 * np.trace(M)
        assert np.allclose(M, M.T, atol=0)


def test_bending_spectrum_convex(rng):
    for _ in range(100):
        xy = random_polygon(rng, int(rng.integers(3, 9)), convex=True)
        M = lf.bending_matrix(xy, MAT)
        ev = np.linalg.eigvalsh(M)
        tr = np.trace(M)
        assert ev.min() >= -1e-12 * tr
        assert np.sum(ev < 1e-10 * tr) == 3


def test_bending_alpha_override():
    M1 = lf.bending_matrix(PENTAGON, MAT, alpha=1.0)
    M2 = lf.bending_matrix(PENTAGON, MAT, alpha=2.0)
    _, N, _, _ = lf.bending_matrix(PENTAGON, MAT, return_parts=True)
    assert np.allclose(M1 @ N, M2 @ N, atol=1e-14)
    assert not np.allclose(M1, M2)


def test_ill_conditioned_cell_named():
    eps = 1e-9
    sliver = np.array([[0, 0], [1, 0], [1, eps], [0.5, 2 * eps], [0, eps]], float)
    with pytest.raises(IllConditionedElementError) as exc:
        lf._bending(batch_geometry(sliver[None]), MAT, cell_ids=[42])
    assert exc.value.cell == 42


def test_degenerate_cell():
    with pytest.raises(DegenerateElementError):
        lf.bending_matrix(np.array([[0, 0], [1, 0], [2, 0]], float), MAT)


# ---------------------------------------------------------------- shear product

def test_shear_product_consistency_and_definiteness(rng):
    for _ in range(100):
        xy = random_polygon(rng, int(rng.integers(3, 11)))
        M, Nb, Rb, _ = lf.shear_product_matrix(xy, return_parts=True)
        assert rel(M @ Nb, Rb) < 1e-12
        assert np.linalg.eigvalsh(M).min() > 0


def test_shear_product_unit_square_curl():
    _, Nb, _, _ = lf.shear_product_matrix(UNIT, return_parts=True)
    t = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], float)
    assert np.allclose(Nb[:, 0], t @ [0.0, -1.0])


# ---------------------------------------------------------------- coupling and stiffness

def test_coupling_unit_square_row():
    C = lf.coupling_matrix(UNIT)
    assert np.array_equal(C[0, 8:], [-1.0, 1.0, 0.0, 0.0])


def test_coupling_constant_rotation():
    g = polygon_geometry(PENTAGON)
    C = lf.coupling_matrix(PENTAGON)
    x = np.concatenate([np.tile([1.0, 0.0], 5), np.zeros(5)])
    assert np.allclose(C @ x, -g.tangents[:, 0])


def test_coupling_commutes_on_linears():
    a, b, c = 0.3, -1.1, 2.4
    x = np.concatenate([np.tile([b, c], 5), a + PENTAGON @ [b, c]])
    assert np.abs(lf.coupling_matrix(PENTAGON) @ x).max() < 1e-14


def test_stiffness_kernel_symmetry_and_scaling():
    A = lf.stiffness(PENTAGON, MAT)
    assert np.array_equal(A, A.T)
    c = np.array([0.7, -0.4])
    x = np.concatenate([np.tile(c, 5), 1.5 + PENTAGON @ c])
    assert np.abs(A @ x).max() < 1e-10 * np.abs(A).max()
    M1 = lf.bending_matrix(PENTAGON, MAT)
    shear = A.copy()
    shear[:10, :10] -= M1
    A2 = lf.stiffness(PENTAGON, MAT.with_(t=MAT.t / np.sqrt(2)))
    shear2 = A2.copy()
    shear2[:10, :10] -= M1
    assert np.allclose(shear2, 2 * shear, rtol=1e-12, atol=1e-12 * np.abs(shear).max())


# ---------------------------------------------------------------- load and mass

def test_load_vector_examples():
    b = lf.load_vector(UNIT, lf.vertex_weights(UNIT), 1.0)
    assert np.allclose(b[8:], 0.25) and np.all(b[:8] == 0)
    assert np.all(lf.load_vector(UNIT, lf.vertex_weights(UNIT), 0.0) == 0)
    w = lf.vertex_weights(PENTAGON)
    assert np.isclose(lf.load_vector(PENTAGON, w, 2.5)[10:].sum(), 2.5 * polygon_moment(PENTAGON, 0, 0))


def test_mass_examples():
    D = lf.mass_matrix(UNIT, lf.vertex_weights(UNIT), lf.MaterialParams(t=0.1))
    d = np.diag(D)
    assert np.allclose(d[8:], 0.25)
    assert np.allclose(d[:8], 0.01 * 0.25 / 12)
    w = lf.vertex_weights(PENTAGON)
    assert np.isclose(lf.mass_diagonal(w, MAT)[0, 10:].sum(), polygon_moment(PENTAGON, 0, 0))
    flat = lf.mass_diagonal(w, types.SimpleNamespace(t=0.0))
    assert np.all(flat[0, :10] == 0)


def test_cell_averages_against_green(rng):
    poly = lambda x, y: 1 + x - 2 * y + 3 * x * y + x ** 2 * y ** 2 - 0.5 * y ** 4 + x ** 3 * y
    terms = [(1, 0, 0), (1, 1, 0), (-2, 0, 1), (3, 1, 1), (1, 2, 2), (-0.5, 0, 4), (1, 3, 1)]
    for _ in range(20):
        xy = random_polygon(rng, int(rng.integers(3, 10)))
        exact = sum(c * polygon_moment(xy, p, q) for c, p, q in terms) / polygon_moment(xy, 0, 0)
        got = lf.cell_averages(batch_geometry(xy[None]), poly)[0]
        assert abs(got - exact) <= 1e-11 * max(1.0, abs(exact))


# ---------------------------------------------------------------- buckling

def test_buckling_zero_sigma():
    assert np.all(lf.buckling_matrix(PENTAGON, np.zeros((2, 2))) == 0)


def test_buckling_uniaxial_columns_vanish():
    B, Nh, Rh = lf.buckling_matrix(PENTAGON, lf.SigmaTensor.uniaxial(), return_parts=True)
    assert np.all(Rh[:, 0] == 0) and np.all(Rh[:, 1] == 0)
    # second basis function is ybar, gradient in the kernel of sigma
    g = polygon_geometry(PENTAGON)
    assert np.allclose(np.abs(Nh[:, 1]), np.abs(g.centered[:, 1]))
    assert rel(B @ Nh, Rh) < 1e-12


def test_buckling_identity_random(rng):
    for _ in range(100):
        xy = random_polygon(rng, int(rng.integers(3, 11)))
        B, Nh, Rh = lf.buckling_matrix(xy, np.eye(2), return_parts=True)
        assert rel(B @ Nh, Rh) < 1e-12
        assert np.linalg.eigvalsh(B).min() >= -1e-12 * np.trace(B)


def test_element_matrices_bundle():
    em = lf.element_matrices(PENTAGON, MAT, gbar=1.0, sigma="shear")
    assert em.m == 5 and em.M.shape == (15, 15) and em.B.shape == (5, 5)
    assert np.isclose(em.b.sum(), polygon_moment(PENTAGON, 0, 0))
    assert em.alpha["bending"] > 0 and em.alpha["shear"] > 0
