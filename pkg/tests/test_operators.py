import numpy as np
import pytest
import scipy.sparse as sp
from conftest import random_eps_map
from hypothesis import given
from hypothesis import strategies as st

from casimir_lattice import operators as ops
from casimir_lattice.lattice import Lattice
from casimir_lattice.materials import DielectricModel, MaterialMap


@pytest.mark.parametrize("L", [4, 5, 6, 7, 8])
def test_nonzero_counts(L):
    lat3, lat2 = Lattice.cube(L), Lattice.square(L)
    curl = ops.assemble_curl(lat3)
    assert curl.nnz == 12 * lat3.n_sites
    cc = (curl.matrix.T @ curl.matrix).tocsc()
    cc.eliminate_zeros()
    assert cc.nnz == 39 * lat3.n_sites
    assert ops.assemble_DA(lat3, MaterialMap.vacuum(lat3), 0.3).nnz == 39 * lat3.n_sites
    vac = MaterialMap.vacuum(lat2)
    assert ops.assemble_DA(lat2, vac, 0.3).nnz == 14 * lat2.n_sites
    assert ops.assemble_DG(lat2, vac, 0.3).nnz == 5 * lat2.n_sites


@pytest.mark.parametrize("lat", [Lattice.square(5), Lattice((4, 5, 6))])
def test_adjoint_and_gauge(lat):
    c = ops.assemble_curl(lat)
    cs = ops.assemble_curl_star(lat)
    assert (cs.matrix != c.matrix.T).nnz == 0
    g = ops.assemble_gradient(lat)
    assert abs(c.matrix @ g.matrix).max() == 0


def test_da_matches_definition(rng):
    lat = Lattice.cube(4)
    m = random_eps_map(lat, rng)
    w, c = 0.7, 1.3
    C = ops.assemble_curl(lat).matrix
    ref = sp.diags(m.epsilon(w) * (w / c) ** 2) + C.T @ C
    A = ops.assemble("DA", m, w, c)
    assert abs(A.matrix - ref).max() < 1e-13
    assert A.symmetric and A.check_symmetric()


def test_dg_matches_definition(rng):
    lat = Lattice.square(6)
    m = random_eps_map(lat, rng)
    w = 0.4
    C = ops.assemble_curl(lat).matrix
    ref = (w**2) * sp.identity(lat.n_faces) + C @ sp.diags(1 / m.epsilon(w)) @ C.T
    A = ops.assemble("DG", m, w)
    assert abs(A.matrix - ref).max() < 1e-13
    assert A.check_symmetric()


def test_pattern_is_frequency_independent(rng):
    lat = Lattice.square(5)
    m = random_eps_map(lat, rng)
    a, b = ops.assemble_DG(lat, m, 0.1), ops.assemble_DG(lat, m, 10.0)
    assert np.array_equal(a.indptr, b.indptr) and np.array_equal(a.indices, b.indices)


def test_invalid_inputs():
    lat = Lattice.square(4)
    vac = MaterialMap.vacuum(lat)
    with pytest.raises(ValueError):
        ops.assemble("DX", vac, 1.0)
    with pytest.raises(ValueError):
        ops.assemble_DG(lat, vac, 0.0)
    with pytest.raises(ValueError):
        ops.assemble_DG(Lattice.square(5), vac, 1.0)


def test_vacuum_2d_dg_is_laplacian():
    lat = Lattice.square(5)
    A = ops.assemble_DG(lat, MaterialMap.vacuum(lat), 0.5).toarray()
    assert np.allclose(np.diag(A), 4.25)
    assert np.allclose(A.sum(axis=1), 0.25)


@given(st.sampled_from(["DA", "DG"]), st.integers(0, 10**6), st.floats(0.05, 5.0))
def test_local_delta_equals_full_difference(kind, seed, w):
    rng = np.random.default_rng(seed)
    lat = Lattice.square(6) if seed % 2 else Lattice.cube(4)
    base = random_eps_map(lat, rng)
    links = rng.choice(lat.n_links, size=5, replace=False)
    model = DielectricModel.single_pole(7.0, 0.3)
    new = base.assign(links, model)
    dofs, block = ops.local_delta(lat, kind, links, base.epsilon(w)[links], model.epsilon(w), w)
    full = (ops.assemble(kind, new, w).matrix - ops.assemble(kind, base, w).matrix).tocsr()
    dense = full[dofs][:, dofs].toarray()
    assert np.allclose(block, dense, atol=1e-12)
    assert np.array_equal(dofs, ops.dofs_touching_links(lat, kind, links))
    coo = full.tocoo()
    inside = np.isin(coo.row, dofs) & np.isin(coo.col, dofs)
    assert np.all(np.abs(coo.data[~inside]) < 1e-12)


def test_coo_dump_roundtrip(tmp_path, rng):
    lat = Lattice.square(4)
    A = ops.assemble_DG(lat, random_eps_map(lat, rng), 0.3)
    path = tmp_path / "a.coo"
    A.dump_coo(path)
    B = ops.load_coo(path)
    assert B.symmetric and (A.matrix != B.matrix).nnz == 0


def test_dof_coordinates():
    lat = Lattice.cube(4)
    xyz = ops.dof_coordinates(lat, "DG")
    assert np.allclose(xyz[lat.encode_face([0, 0, 0], 2)], [0.5, 0.5, 0.0])
    assert np.allclose(xyz[lat.encode_face([1, 0, 0], 0)], [1.0, 0.5, 0.5])
