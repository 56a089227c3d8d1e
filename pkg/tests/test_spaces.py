import numpy as np
import pytest
from conftest import single_cell_mesh

from mfdplate.generators import FAMILIES, generate_mesh
from mfdplate.local_forms import MaterialParams
from mfdplate.postproc import exact_solution
from mfdplate.spaces import (DEFLECTION, FieldVector, build_dof_map, discrete_gradient, interp_scalar,
                             interp_shear, interp_vector, norm_gamma, norm_h, norm_h_triple, norm_w,
                             norms, parse_bc, reduction)

UNIT = [[0, 0], [1, 0], [1, 1], [0, 1]]


def fam_mesh(fam, n=4):
    return generate_mesh(fam, n, seed=1 if fam in ("T3", "T7") else None)


def test_parse_bc_order_and_errors():
    assert parse_bc("CSFC") == {"left": "C", "right": "S", "bottom": "F", "top": "C"}
    assert parse_bc({"left": "c"}) == {"left": "C", "right": "F", "bottom": "F", "top": "F"}
    with pytest.raises(ValueError):
        parse_bc("CCC")
    with pytest.raises(ValueError):
        parse_bc("CCCX")
    with pytest.raises(ValueError):
        parse_bc({"north": "C"})


def test_clamped_counts():
    dm = build_dof_map(generate_mesh("T4", 4), "CCCC")
    assert dm.n_free == 27
    assert dm.n_deflection == 9
    assert dm.n_rotation == 18


def test_soft_simple_support_counts():
    dm = build_dof_map(generate_mesh("T4", 4), "SSSS", support="soft")
    assert dm.n_free == 59


def test_hard_simple_support_counts():
    # 16 boundary vertices lose w; 12 side vertices lose one rotation, 4 corners lose two
    dm = build_dof_map(generate_mesh("T4", 4), "SSSS", support="hard")
    assert dm.n_free == 75 - 16 - 12 - 8
    mesh = generate_mesh("T4", 4)
    left_mid = [v for v in mesh.vertex_sides["left"] if 0 < mesh.vertices[v, 1] < 1]
    assert np.all(dm.index[left_mid, 1] < 0) and np.all(dm.index[left_mid, 0] >= 0)


def test_free_edge_keeps_dofs():
    mesh = generate_mesh("T4", 4)
    dm = build_dof_map(mesh, "CCCF")
    top_inner = [v for v in mesh.vertex_sides["top"] if 0 < mesh.vertices[v, 0] < 1]
    assert len(top_inner) == 3
    assert np.all(dm.index[top_inner] >= 0)
    assert dm.n_free == 27 + 9


def test_support_option_validated():
    with pytest.raises(ValueError):
        build_dof_map(generate_mesh("T4", 2), "SSSS", support="medium")


def test_expand_restrict_round_trip(rng):
    mesh = generate_mesh("T2", 4)
    dm = build_dof_map(mesh, "CSCF", support="hard")
    x = rng.standard_normal(dm.n_free)
    full = dm.expand(x)
    assert np.allclose(dm.restrict(full), x)
    assert np.all(full.ravel()[dm.fixed_slots] == 0)


def test_lift_prescribes_values():
    mesh = generate_mesh("T4", 4)
    dm = build_dof_map(mesh, "CCCC", lift=lambda x, y: (x + 2 * y, 1.0, 2.0))
    b = mesh.vertex_sides["bottom"]
    assert np.allclose(dm.prescribed[b, DEFLECTION], mesh.vertices[b, 0])
    assert np.allclose(dm.prescribed[b, 0], 1.0)
    full = dm.expand(np.zeros(dm.n_free))
    assert np.allclose(full[b, 1], 2.0)


def test_interp_scalar_examples():
    mesh = generate_mesh("T4", 2)
    assert np.all(interp_scalar(lambda x, y: 0 * x, mesh).values == 0)
    assert np.array_equal(interp_scalar(lambda x, y: x, mesh).values, mesh.vertices[:, 0])
    ex = exact_solution(MaterialParams())
    m8 = generate_mesh("T3", 8, seed=1)
    wI = interp_scalar(ex.w, m8)
    bnd = np.unique(np.concatenate(list(m8.vertex_sides.values())))
    assert np.abs(wI.values[bnd]).max() < 1e-15


def test_interp_vector_examples():
    mesh = generate_mesh("T6", 4)
    assert np.all(interp_vector(lambda x, y: (0 * x, 0 * y), mesh).values == 0)
    assert np.all(interp_vector(lambda x, y: (1.0, 0.0), mesh).values == [1.0, 0.0])
    ex = exact_solution(MaterialParams())
    bI = interp_vector(ex.beta, mesh)
    bnd = np.unique(np.concatenate(list(mesh.vertex_sides.values())))
    assert np.abs(bI.values[bnd]).max() < 1e-15


def test_interp_shear_examples():
    mesh = single_cell_mesh(UNIT)
    val = interp_shear(lambda x, y: (1.0, 0.0), mesh).values
    assert val[0] == 1.0                                 # bottom edge, t = (1, 0)
    # curl of x + 2y is (2, -1), constant along each edge
    val = interp_shear(lambda x, y: (2.0 + 0 * x, -1.0 + 0 * y), mesh).values
    mid_t = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], float)
    assert np.allclose(val, mid_t @ [2.0, -1.0], atol=1e-15)
    # d = (y, 0) on the left edge (0,1) -> (0,0): orthogonal
    assert abs(interp_shear(lambda x, y: (y, 0 * x), mesh).values[3]) < 1e-16


def test_discrete_gradient_examples():
    mesh = fam_mesh("T5")
    assert np.all(discrete_gradient(interp_scalar(lambda x, y: 3.0 + 0 * x, mesh), mesh).values == 0)
    tri = single_cell_mesh([[0, 0], [0.5, 0], [0, 0.5]])
    v = FieldVector("W", np.array([0.0, 1.0, 0.0]))
    assert discrete_gradient(v, tri).values[0] == 2.0
    with pytest.raises(ValueError):
        discrete_gradient(FieldVector("H", np.zeros((3, 2))), tri)


def test_reduction_examples():
    mesh = fam_mesh("T7")
    eta = interp_vector(lambda x, y: (0.3 + 0 * x, -1.2 + 0 * y), mesh)
    a = np.concatenate(mesh.cells)
    b = np.concatenate([np.roll(c, -1) for c in mesh.cells])
    t = mesh.vertices[b] - mesh.vertices[a]
    t /= np.linalg.norm(t, axis=1)[:, None]
    assert np.allclose(reduction(eta, mesh).values, t @ [0.3, -1.2], atol=1e-15)
    tri = single_cell_mesh([[0, 0], [1, 0], [0, 1]])
    anti = FieldVector("H", np.array([[1.0, 2.0], [-1.0, -2.0], [0.0, 0.0]]))
    assert reduction(anti, tri).values[0] == 0.0


@pytest.mark.parametrize("fam", FAMILIES)
def test_commuting_identities(fam, rng):
    mesh = fam_mesh(fam)
    a, b, c = rng.standard_normal(3)
    v = interp_scalar(lambda x, y: a + b * x + c * y, mesh)
    grad = interp_shear(lambda x, y: (b + 0 * x, c + 0 * y), mesh)
    assert np.abs(discrete_gradient(v, mesh).values - grad.values).max() < 1e-13
    P = rng.standard_normal((2, 3))
    p = lambda x, y: (P[0, 0] + P[0, 1] * x + P[0, 2] * y, P[1, 0] + P[1, 1] * x + P[1, 2] * y)
    assert np.abs(reduction(interp_vector(p, mesh), mesh).values - interp_shear(p, mesh).values).max() < 1e-13


def test_norm_examples():
    mesh = fam_mesh("T3")
    assert norm_w(interp_scalar(lambda x, y: 1.0 + 0 * x, mesh), mesh) == 0.0
    xb = mesh.vertices - 0.37
    rot = FieldVector("H", np.column_stack([xb[:, 1], -xb[:, 0]]))
    assert norm_h(rot, mesh) < 1e-13
    assert norm_h_triple(rot, mesh) > 0.1
    sq = single_cell_mesh(UNIT)
    assert np.isclose(norm_gamma(FieldVector("Gamma", np.ones(4)), sq) ** 2, 4.0)
    assert set(norms(rot, mesh)) == {"H", "H_triple"}


def test_norm_role_checks():
    sq = single_cell_mesh(UNIT)
    with pytest.raises(ValueError):
        norm_w(FieldVector("Gamma", np.ones(4)), sq)
    with pytest.raises(ValueError):
        norm_gamma(FieldVector("W", np.ones(4)), sq)


def test_field_vector_algebra():
    a = FieldVector("W", np.arange(3.0))
    b = FieldVector("W", np.ones(3))
    assert np.array_equal((a + b).values, [1, 2, 3])
    assert np.array_equal((2 * a - b).values, [-1, 1, 3])
    with pytest.raises(ValueError):
        a + FieldVector("Gamma", np.ones(3))
    with pytest.raises(ValueError):
        FieldVector("X", np.ones(3))


def test_field_vector_free_ordering():
    mesh = generate_mesh("T4", 4)
    dm = build_dof_map(mesh, "CCCC")
    w = interp_scalar(lambda x, y: x + 10 * y, mesh)
    beta = interp_vector(lambda x, y: (x, y), mesh)
    full = np.zeros(dm.index.shape)
    full[:, 2] = w.values
    full[:, :2] = beta.values
    x = dm.restrict(full)
    assert np.allclose(x[dm.index[dm.index[:, 2] >= 0, 2]], w.free(dm))
    assert np.allclose(np.sort(x[dm.index[:, :2][dm.index[:, :2] >= 0]]), np.sort(beta.free(dm)))
