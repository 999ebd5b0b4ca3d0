import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from lgm.errors import SingularPrecision
from lgm.graph import lattice_graph, leroux_structure, random_planar_graph
from lgm.sparse import SymbolicCholesky, minimum_degree_order


def spd_from_graph(J, seed, phi=0.7, tau=2.0):
    g, _ = random_planar_graph(J, np.random.default_rng(seed))
    A = tau * leroux_structure(g, phi).matrix
    # add a dense-ish first row/column, like fixed effects coupled to every region
    B = sp.lil_matrix((J + 2, J + 2))
    B[2:, 2:] = A
    rng = np.random.default_rng(seed + 1)
    w = rng.normal(size=(2, J)) * 0.1
    B[:2, 2:] = w
    B[2:, :2] = w.T
    B[0, 0] = B[1, 1] = J
    return sp.csc_matrix(B)


@pytest.mark.parametrize("J,seed", [(5, 0), (20, 1), (50, 2)])
def test_selected_inverse_diagonal_matches_dense(J, seed):
    A = spd_from_graph(J, seed)
    f = SymbolicCholesky(A).factor(SymbolicCholesky(A).values_from_matrix(A))
    dense = np.linalg.inv(A.toarray())
    assert np.max(np.abs(f.inverse_diagonal() - np.diag(dense))) < 1e-10


def test_entries_on_pattern_match_dense():
    A = spd_from_graph(30, 7)
    sym = SymbolicCholesky(A)
    f = sym.factor(sym.values_from_matrix(A))
    coo = A.tocoo()
    got = f.inverse_entries(coo.row, coo.col)
    dense = np.linalg.inv(A.toarray())
    assert np.max(np.abs(got - dense[coo.row, coo.col])) < 1e-10


def test_logdet_solve_and_sampling_covariance():
    A = spd_from_graph(40, 3)
    sym = SymbolicCholesky(A)
    f = sym.factor(sym.values_from_matrix(A))
    D = A.toarray()
    assert f.logdet() == pytest.approx(np.linalg.slogdet(D)[1], abs=1e-10)
    b = np.arange(D.shape[0], dtype=float)
    assert np.allclose(f.solve(b), np.linalg.solve(D, b), atol=1e-12)
    # L^{-T} maps the identity onto a square root of the inverse
    R = f.solve_lt(np.eye(D.shape[0]))
    assert np.allclose(R @ R.T, np.linalg.inv(D), atol=1e-12)


@given(st.integers(0, 10_000))
def test_ordering_does_not_change_results(seed):
    A = spd_from_graph(15, seed % 50)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(A.shape[0])
    a = SymbolicCholesky(A)
    b = SymbolicCholesky(A, perm=perm)
    fa = a.factor(a.values_from_matrix(A))
    fb = b.factor(b.values_from_matrix(A))
    assert fa.logdet() == pytest.approx(fb.logdet(), abs=1e-10)
    assert np.allclose(fa.inverse_diagonal(), fb.inverse_diagonal(), atol=1e-12)


def test_minimum_degree_is_a_permutation():
    A = leroux_structure(lattice_graph(10, 10), 0.5).matrix
    p = minimum_degree_order(A)
    assert sorted(p) == list(range(100))


def test_singular_matrix_is_reported():
    Q = leroux_structure(lattice_graph(3, 3), 1.0).matrix
    sym = SymbolicCholesky(Q)
    with pytest.raises(SingularPrecision):
        sym.factor(sym.values_from_matrix(Q))


def test_entry_off_pattern():
    A = sp.identity(4, format="csc") * 2.0
    sym = SymbolicCholesky(A)
    f = sym.factor(sym.values_from_matrix(A))
    with pytest.raises(KeyError):
        f.inverse_entries([0], [3])
