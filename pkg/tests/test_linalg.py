import warnings

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from conftest import random_eps_map
from hypothesis import given
from hypothesis import strategies as st

from casimir_lattice import operators as ops
from casimir_lattice.lattice import Lattice
from casimir_lattice.linalg import (
    ClosureError,
    ConditioningWarning,
    NotPositiveDefiniteError,
    SchurPlan,
    amd,
    analyze,
    factorize,
    nested_dissection,
    perturbed_logdet_family,
    reduce_to_subset,
    schur_complement,
)
from casimir_lattice.oracle import dense_logdet


def random_spd(n, density, rng):
    A = sp.random(n, n, density=density, random_state=rng, format="csc")
    A = A + A.T
    return (A + sp.diags(np.abs(A).sum(axis=1).A1 + 1.0)).tocsc()


def is_perm(p, n):
    return np.array_equal(np.sort(p), np.arange(n))


@given(st.integers(1, 120), st.floats(0.0, 0.2), st.integers(0, 10**6))
def test_amd_returns_permutation(n, density, seed):
    A = random_spd(n, density, np.random.default_rng(seed))
    assert is_perm(amd(A), n)


def test_amd_reduces_fill_on_grid():
    lat = Lattice.square(24)
    A = ops.assemble_DG(lat, ops.MaterialMap.vacuum(lat), 0.5)
    assert analyze(A, "amd").nnz < 0.5 * analyze(A, "natural").nnz


def test_nested_dissection_is_permutation():
    lat = Lattice.cube(8)
    A = ops.assemble_DG(lat, ops.MaterialMap.vacuum(lat), 0.5)
    p = nested_dissection(A, ops.dof_coordinates(lat, "DG"), leaf_size=64)
    assert is_perm(p, A.shape[0])


@pytest.mark.parametrize("method", ["simplicial", "supernodal"])
@pytest.mark.parametrize("ordering", ["amd", "natural", "nd"])
@pytest.mark.parametrize("kind,lat", [("DG", Lattice.square(9)), ("DA", Lattice.square(7)),
                                      ("DG", Lattice.cube(4)), ("DA", Lattice.cube(4))])
def test_logdet_and_solve_match_dense(method, ordering, kind, lat, rng):
    A = ops.assemble(kind, random_eps_map(lat, rng), 0.37)
    f = factorize(A, ordering, method=method, coords=ops.dof_coordinates(lat, kind))
    D = A.toarray()
    assert f.logdet() == pytest.approx(np.linalg.slogdet(D)[1], rel=1e-12)
    b = rng.standard_normal((A.shape[0], 3))
    assert np.allclose(D @ f.solve(b), b, atol=1e-10)
    assert abs(f.reconstruct() - A.matrix).max() < 1e-11
    # L^{-1} P B
    U = f.solve_lower(b)
    assert np.allclose(np.sum(U * U), b.T.flatten() @ np.linalg.solve(D, b).T.flatten(), rtol=1e-10)


def test_logdet_is_permutation_invariant(rng):
    lat = Lattice.square(10)
    A = ops.assemble_DG(lat, random_eps_map(lat, rng), 0.2)
    vals = [factorize(A, o).logdet() for o in ("amd", "natural", rng.permutation(A.shape[0]))]
    assert np.ptp(vals) < 1e-10 * abs(vals[0])


def test_symbolic_reuse_and_mismatch(rng):
    lat = Lattice.square(8)
    A = ops.assemble_DG(lat, random_eps_map(lat, rng), 0.2)
    B = ops.assemble_DG(lat, random_eps_map(lat, rng), 3.0)
    sym = analyze(A)
    assert factorize(B, symbolic=sym).logdet() == pytest.approx(factorize(B).logdet(), rel=1e-13)
    C = ops.assemble_DG(Lattice.square(9), ops.MaterialMap.vacuum(Lattice.square(9)), 1.0)
    with pytest.raises(ValueError):
        factorize(C, symbolic=sym)


@pytest.mark.parametrize("method", ["simplicial", "supernodal"])
def test_not_positive_definite_reports_pivot(method):
    D = np.diag([4.0, 3.0, -1.0, 5.0, 2.0])
    with pytest.raises(NotPositiveDefiniteError) as exc:
        factorize(sp.csc_matrix(D), "natural", method=method, context="node 3")
    assert exc.value.pivot == 2
    assert "node 3" in str(exc.value)


def test_ill_conditioning_warns():
    D = sp.diags([1.0, 1e-15, 2.0]).tocsc()
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        factorize(D, "natural")
    assert any(issubclass(w.category, ConditioningWarning) for w in rec)


def test_rejects_non_square():
    with pytest.raises(ValueError):
        factorize(sp.csc_matrix(np.ones((2, 3))))


def test_schur_identity_random_partitions(rng):
    for _ in range(10):
        n = int(rng.integers(20, 200))
        A = random_spd(n, 0.05, rng)
        z = rng.choice(n, size=int(rng.integers(1, min(30, n - 1))), replace=False)
        fx, S = schur_complement(A, SchurPlan(n, z))
        total = fx.logdet() + np.linalg.slogdet(S)[1]
        assert total == pytest.approx(dense_logdet(A), rel=1e-10)
        D = A.toarray()
        bulk = np.setdiff1d(np.arange(n), z)
        ref = D[np.ix_(z, z)] - D[np.ix_(z, bulk)] @ np.linalg.solve(D[np.ix_(bulk, bulk)], D[np.ix_(bulk, z)])
        assert np.allclose(S, ref, atol=1e-10)


def test_schur_plan_validation():
    with pytest.raises(ValueError):
        SchurPlan(5, [1, 1])
    with pytest.raises(ValueError):
        SchurPlan(5, [7])
    with pytest.raises(ClosureError):
        SchurPlan(5, [1, 2], {"a": [3]})
    plan = SchurPlan.from_subsets(6, {"a": [4, 1], "b": [1, 2]})
    assert plan.retained.tolist() == [4, 1, 2]
    assert plan.bulk.tolist() == [0, 3, 5]
    assert plan.local([2, 4]).tolist() == [2, 0]
    with pytest.raises(ClosureError):
        plan.check_closure(sp.coo_matrix(([1.0], ([0], [4])), shape=(6, 6)))


def test_reduce_to_subset_matches_inverse(rng):
    M = random_spd(12, 0.3, rng).toarray()
    t = [2, 5, 7]
    R = reduce_to_subset(M, t)
    assert np.allclose(np.linalg.inv(R), np.linalg.inv(M)[np.ix_(t, t)])


def test_perturbed_family_exact_differences(rng):
    M = random_spd(15, 0.3, rng).toarray()
    subsets, perts, direct = [], [], []
    for _ in range(6):
        t = np.sort(rng.choice(15, size=3, replace=False))
        d = np.zeros_like(M)
        B = rng.standard_normal((3, 3))
        d[np.ix_(t, t)] = 0.1 * (B @ B.T)
        subsets.append(t)
        perts.append(d)
        direct.append(np.linalg.slogdet(M + d)[1])
    vals = perturbed_logdet_family(M, perts, subsets)
    assert np.allclose(vals, direct, atol=1e-11)
    shifts = perturbed_logdet_family(M, perts, subsets, include_constant=False)
    assert np.allclose(np.diff(shifts), np.diff(direct), atol=1e-11)
    # a 1x1 block: ln(s + d) - ln s
    one = perturbed_logdet_family(np.array([[2.0]]), [np.array([[3.0]])], [[0]], include_constant=True)
    assert one[0] == pytest.approx(np.log(5.0))


def test_perturbation_outside_subset_rejected(rng):
    M = random_spd(6, 0.5, rng).toarray()
    d = np.zeros_like(M)
    d[0, 5] = d[5, 0] = 0.1
    with pytest.raises(ClosureError):
        perturbed_logdet_family(M, [d], [[0, 1]])


def test_dense_lapack_reference(rng):
    M = random_spd(30, 0.2, rng).toarray()
    c = sla.cholesky(M, lower=True)
    assert factorize(sp.csc_matrix(M)).logdet() == pytest.approx(2 * np.log(np.diag(c)).sum(), rel=1e-13)
