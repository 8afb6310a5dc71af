import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from monomg.linalg import (
    DenseLU,
    SingularMatrixError,
    csr,
    dense_eigenvalues,
    dense_lu_solve,
    gmres,
    identity,
    kron_sparse,
    read_matrix_market,
    spectral_radius,
    spmv,
    write_matrix_market,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _csr_invariants(A):
    assert len(A.indptr) == A.shape[0] + 1
    assert np.all(np.diff(A.indptr) >= 0)
    for i in range(A.shape[0]):
        cols = A.indices[A.indptr[i]:A.indptr[i + 1]]
        assert np.all(np.diff(cols) > 0)
        assert np.all((cols >= 0) & (cols < A.shape[1]))
    assert np.all(np.abs(A.data) >= 1e-300)


def test_csr_canonical():
    A = csr(sp.coo_matrix(([1.0, 2.0, 1e-320, 3.0], ([0, 0, 1, 1], [1, 1, 0, 0])), shape=(2, 2)))
    _csr_invariants(A)
    assert A[0, 1] == 3.0 and A[1, 0] == 3.0
    assert A.nnz == 2


def test_spmv_examples():
    np.testing.assert_array_equal(spmv(identity(3), [1.0, 2.0, 3.0]), [1, 2, 3])
    np.testing.assert_array_equal(spmv(csr(np.zeros((2, 2))), [1.0, 1.0]), [0, 0])
    np.testing.assert_array_equal(spmv(csr([[2.0, 0.0], [1.0, 3.0]]), [1.0, 1.0]), [2, 4])
    with pytest.raises(ValueError):
        spmv(identity(3), np.ones(2))


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 60), st.integers(1, 60))
def test_spmv_matches_dense(seed, m, n):
    rng = np.random.default_rng(seed)
    D = rng.standard_normal((m, n)) * (rng.random((m, n)) < 0.3)
    A = csr(D)
    _csr_invariants(A)
    x = rng.standard_normal(n)
    y = D @ x
    assert np.abs(spmv(A, x) - y).max() <= 1e-13 * max(1.0, np.abs(y).max())


def test_kron_examples():
    K = csr([[2.0, -1.0], [-1.0, 2.0]])
    np.testing.assert_array_equal(kron_sparse([[3.0]], K).toarray(), 3 * K.toarray())
    I2K = kron_sparse(np.eye(2), K).toarray()
    np.testing.assert_array_equal(I2K[:2, :2], K.toarray())
    np.testing.assert_array_equal(I2K[2:, 2:], K.toarray())
    assert not I2K[:2, 2:].any() and not I2K[2:, :2].any()


@settings(max_examples=30, deadline=None)
@given(seeds, st.sampled_from([2, 3]), st.integers(1, 6))
def test_kron_mixed_product(seed, s, n):
    rng = np.random.default_rng(seed)
    A, C = rng.standard_normal((s, s)), rng.standard_normal((s, s))
    B, D = rng.standard_normal((n, n)), rng.standard_normal((n, n))
    lhs = (kron_sparse(A, csr(B)) @ kron_sparse(C, csr(D))).toarray()
    rhs = kron_sparse(A @ C, csr(B @ D)).toarray()
    assert np.abs(lhs - rhs).max() <= 1e-12 * max(1.0, np.abs(rhs).max())
    x, y = rng.standard_normal(s), rng.standard_normal(n)
    np.testing.assert_allclose(kron_sparse(A, csr(B)) @ np.kron(x, y), np.kron(A @ x, B @ y), atol=1e-12)


def test_lu_examples(rng):
    b = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(dense_lu_solve(np.eye(3), b), b)
    np.testing.assert_allclose(dense_lu_solve([[2.0, 0.0], [0.0, 4.0]], [2.0, 4.0]), [1, 1])
    A = rng.standard_normal((8, 8))
    x = rng.standard_normal(8)
    np.testing.assert_allclose(dense_lu_solve(A, A @ x), x, atol=1e-9)
    Ac = A + 1j * rng.standard_normal((8, 8))
    np.testing.assert_allclose(dense_lu_solve(Ac, Ac @ x), x, atol=1e-9)


def test_lu_rejects_singular():
    with pytest.raises(SingularMatrixError):
        DenseLU([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(ValueError):
        DenseLU(np.ones((2, 3)))


def test_eigenvalue_examples():
    np.testing.assert_allclose(dense_eigenvalues(np.diag([3.0, 1.0, 2.0])), [1, 2, 3])
    np.testing.assert_allclose(dense_eigenvalues([[0.0, -1.0], [1.0, 0.0]]), [-1j, 1j], atol=1e-15)
    A = np.array([[5 / 12, -1 / 12], [3 / 4, 1 / 4]])
    np.testing.assert_allclose(dense_eigenvalues(A), [1 / 3 - 1j * np.sqrt(2) / 6, 1 / 3 + 1j * np.sqrt(2) / 6],
                               atol=1e-10)
    assert spectral_radius(np.diag([0.5, -2.0])) == 2.0


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(1, 50))
def test_eigenvalue_trace_det(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    lam = dense_eigenvalues(A)
    assert abs(lam.sum() - np.trace(A)) <= 1e-8 * max(1.0, np.abs(A).sum())
    lu = DenseLU(A)
    sign = (-1) ** np.count_nonzero(lu.piv != np.arange(n))
    det = sign * np.prod(np.diag(lu.lu))
    assert abs(np.prod(lam) - det) <= 1e-8 * max(1.0, abs(det))


def test_gmres_identity(rng):
    b = rng.standard_normal(10)
    x, st_ = gmres(lambda v: v, b)
    assert st_.converged and st_.iterations == 1
    np.testing.assert_allclose(x, b)


def test_gmres_spd_2x2():
    A = np.array([[4.0, 1.0], [1.0, 3.0]])
    b = np.array([1.0, 2.0])
    x, st_ = gmres(lambda v: A @ v, b, tol=1e-12)
    assert st_.iterations <= 2
    np.testing.assert_allclose(x, dense_lu_solve(A, b), atol=1e-10)


def test_gmres_exact_preconditioner(rng):
    A = rng.standard_normal((30, 30)) + 6 * np.eye(30)
    lu = DenseLU(A)
    b = rng.standard_normal(30)
    x, st_ = gmres(lambda v: A @ v, b, apply_prec=lu.solve, tol=1e-12)
    assert st_.iterations == 1
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b) * 10


def test_gmres_zero_rhs():
    x, st_ = gmres(lambda v: 2 * v, np.zeros(4))
    assert st_.converged and st_.iterations == 0 and not x.any()


def test_gmres_max_iter_reported(rng):
    A = rng.standard_normal((40, 40)) + 0.1 * np.eye(40)
    _, st_ = gmres(lambda v: A @ v, rng.standard_normal(40), tol=1e-14, max_iter=3)
    assert not st_.converged and st_.iterations == 3


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(2, 50), st.booleans())
def test_gmres_contract(seed, n, complex_):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + np.sqrt(n) * np.eye(n)
    if complex_:
        A = A + 1j * rng.standard_normal((n, n))
    b = rng.standard_normal(n)
    x, st_ = gmres(lambda v: A @ v, b, tol=1e-13, max_iter=n)
    h = np.array(st_.residual_history)
    assert np.all(np.diff(h) <= 1e-14)
    xd = dense_lu_solve(A, b)
    assert np.linalg.norm(x - xd) <= 1e-8 * np.linalg.norm(xd)


def test_matrix_market_roundtrip(tmp_path, rng):
    D = rng.standard_normal((7, 5)) * (rng.random((7, 5)) < 0.5)
    D[0, 0] = np.pi
    A = csr(D)
    path = tmp_path / "a.mtx"
    write_matrix_market(path, A)
    B = read_matrix_market(path)
    assert B.shape == A.shape
    np.testing.assert_array_equal(B.toarray(), A.toarray())
