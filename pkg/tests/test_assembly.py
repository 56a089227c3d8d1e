import numpy as np
import pytest
import scipy.sparse as sp

from mfdplate.assembly import (assemble_buckling, assemble_full_stiffness, assemble_load, assemble_mass,
                               assemble_source, assemble_stiffness, export_triplets, load_slots, mass_slots)
from mfdplate.errors import MfdError
from mfdplate.generators import generate_mesh
from mfdplate.local_forms import MaterialParams, SigmaTensor
from mfdplate.spaces import build_dof_map

MAT = MaterialParams(t=0.01)


def test_single_interior_vertex():
    mesh = generate_mesh("T4", 2)
    A = assemble_stiffness(mesh, build_dof_map(mesh, "CCCC"), MAT)
    assert A.matrix.shape == (3, 3)
    assert A.describe_row(2) == (4, "w")


@pytest.mark.parametrize("fam", ["T1", "T2", "T4", "T7"])
def test_symmetric(fam):
    mesh = generate_mesh(fam, 4, seed=1 if fam == "T7" else None)
    A = assemble_stiffness(mesh, build_dof_map(mesh, "CSFC"), MAT).matrix
    assert abs(A - A.T).max() == 0.0


@pytest.mark.parametrize("n", [2, 4, 8])
def test_clamped_is_spd(n):
    mesh = generate_mesh("T4", n)
    A = assemble_stiffness(mesh, build_dof_map(mesh, "CCCC"), MAT).matrix.toarray()
    np.linalg.cholesky(A)
    assert np.linalg.eigvalsh(A).min() > 0


def test_free_plate_kernel():
    # unconstrained plate: rigid modes (constant w) and linear w with matching rotations
    mesh = generate_mesh("T2", 4)
    A = assemble_full_stiffness(mesh, MAT)
    x, y = mesh.vertices.T
    for a, b, c in [(1, 0, 0), (0, 1, 0), (0, 0, 1)]:
        u = np.column_stack([np.full_like(x, b), np.full_like(x, c), a + b * x + c * y]).ravel()
        assert np.abs(A @ u).max() < 1e-8 * abs(A).max()


def test_workers_give_identical_matrix():
    mesh = generate_mesh("T3", 16, seed=2)
    dm = build_dof_map(mesh, "CCCC")
    A1 = assemble_stiffness(mesh, dm, MAT, workers=1).matrix
    A4 = assemble_stiffness(mesh, dm, MAT, workers=4).matrix
    assert np.array_equal(A1.indptr, A4.indptr)
    assert np.array_equal(A1.indices, A4.indices)
    assert np.array_equal(A1.data, A4.data)


def test_load_examples():
    mesh = generate_mesh("T4", 2)
    dm = build_dof_map(mesh, "CCCC")
    assert np.all(assemble_load(mesh, dm, MAT, 0.0) == 0)
    f = assemble_load(mesh, dm, MAT, 1.0)
    assert np.allclose(f, [0, 0, 0.25])


def test_load_total_on_free_mesh():
    mesh = generate_mesh("T7", 4, seed=1)
    f = load_slots(mesh, lambda x, y: x)
    assert np.isclose(f[:, 2].sum(), 0.5, rtol=1e-12)
    assert np.all(f[:, :2] == 0)


def test_lift_correction():
    mesh = generate_mesh("T4", 4)
    lin = lambda x, y: (1 + 2 * x - y, 2.0 + 0 * x, -1.0 + 0 * y)
    dm = build_dof_map(mesh, "CCCC", lift=lin)
    A = assemble_stiffness(mesh, dm, MAT)
    Afull = assemble_full_stiffness(mesh, MAT)
    up = dm.prescribed.ravel().copy()
    up[dm.free_slots] = 0
    assert np.allclose(A.lift_rhs, -(Afull @ up)[dm.free_slots])
    assert np.allclose(assemble_load(mesh, dm, MAT, 0.0), A.lift_rhs)


def test_mass_examples():
    mesh = generate_mesh("T5", 4)
    dm = build_dof_map(mesh, "CCCC")
    M = assemble_mass(mesh, dm, MAT).matrix
    d = M.diagonal()
    assert np.all(d > 0)
    full = mass_slots(mesh, MAT)
    assert np.isclose(full[:, 2].sum(), 1.0)
    removed = full[dm.index[:, 2] < 0, 2].sum()
    assert np.isclose(d[dm.index[dm.index[:, 2] >= 0, 2]].sum(), 1.0 - removed)
    thick = mass_slots(mesh, MAT.with_(t=0.1))
    assert np.allclose(thick[:, :2], full[:, :2] * 100)
    assert np.allclose(thick[:, 2], full[:, 2])


def test_buckling_structure():
    mesh = generate_mesh("T6", 4)
    dm = build_dof_map(mesh, "FFFF")
    B = assemble_buckling(mesh, dm, "identity").matrix
    rot = dm.index[:, :2].ravel()
    assert abs(B[rot][:, rot]).max() == 0
    w = dm.index[:, 2]
    const = np.zeros(dm.n_free)
    const[w] = 1.0
    assert np.abs(B @ const).max() < 1e-13


@pytest.mark.parametrize("sigma", ["identity", "uniaxial"])
def test_buckling_psd_small(sigma):
    mesh = generate_mesh("T2", 4)
    B = assemble_buckling(mesh, build_dof_map(mesh, "CCCC"), sigma).matrix.toarray()
    ev = np.linalg.eigvalsh(B)
    assert ev.min() >= -1e-12 * ev.max()


def test_buckling_zero_sigma_rejected():
    mesh = generate_mesh("T4", 2)
    with pytest.raises(MfdError):
        assemble_buckling(mesh, build_dof_map(mesh, "CCCC"), SigmaTensor(np.zeros((2, 2))))


def test_source_system_bundles_rhs():
    mesh = generate_mesh("T4", 4)
    dm = build_dof_map(mesh, "CCCC")
    sys_ = assemble_source(mesh, dm, MAT, 1.0)
    assert sys_.rhs.shape == (dm.n_free,)
    assert sys_.n == dm.n_free
    assert set(sys_.row_kind) == {0, 1, 2}


def test_export_triplets(tmp_path):
    mesh = generate_mesh("T4", 4)
    A = assemble_stiffness(mesh, build_dof_map(mesh, "CCCC"), MAT)
    path = tmp_path / "a.txt"
    export_triplets(A, path)
    lines = path.read_text().splitlines()
    n, m, nnz = (int(v) for v in lines[0][1:].split())
    data = np.loadtxt(lines[1:])
    B = sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, m))
    assert nnz == A.matrix.nnz
    assert abs(B - A.matrix).max() == 0
