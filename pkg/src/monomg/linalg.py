"""Sparse/dense linear algebra kernels shared by every other module.

Sparse matrices are ``scipy.sparse.csr_matrix`` kept in canonical form
(sorted column indices, no duplicates, no stored zeros). Dense LU and the
nonsymmetric eigensolver delegate to LAPACK; GMRES is implemented here so
that its stopping rule and residual history follow our own contract.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse as sp

SparseMatrix = sp.csr_matrix

ZERO_DROP = 1e-300
PIVOT_TOL = 1e-14


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class EigenvalueError(np.linalg.LinAlgError):
    pass


def csr(A, shape=None) -> SparseMatrix:
    """Return ``A`` as a canonical CSR matrix.

    Duplicates are summed, column indices sorted within each row, and entries
    with magnitude below 1e-300 dropped.
    """
    out = sp.csr_matrix(A, shape=shape, copy=True)
    out.sum_duplicates()
    if out.nnz:
        out.data[np.abs(out.data) < ZERO_DROP] = 0
    out.eliminate_zeros()
    out.sort_indices()
    return out


def identity(n: int) -> SparseMatrix:
    return csr(sp.identity(n, format="csr"))


def spmv(A: SparseMatrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.shape[0] != A.shape[1]:
        raise ValueError(f"spmv: matrix has {A.shape[1]} columns, vector has length {x.shape[0]}")
    return A @ x


def kron_sparse(Ad, K) -> SparseMatrix:
    """Kronecker product ``Ad (x) K`` of a small dense matrix and a sparse one.

    Blocks with ``Ad[i, j] == 0`` are structurally absent.
    """
    Ad = np.atleast_2d(np.asarray(Ad))
    return csr(sp.kron(sp.csr_matrix(Ad), sp.csr_matrix(K), format="csr"))


def to_dense(A) -> np.ndarray:
    if sp.issparse(A):
        return A.toarray()
    return np.asarray(A)


class DenseLU:
    """Partial-pivoted LU of a square dense matrix, factored once.

    Raises :class:`SingularMatrixError` when a pivot falls below
    ``1e-14 * ||A||_inf``.
    """

    def __init__(self, A):
        A = np.asarray(to_dense(A))
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"LU needs a square matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise ValueError("LU input contains non-finite entries")
        self.n = A.shape[0]
        self.norm_inf = float(np.abs(A).sum(axis=1).max()) if self.n else 0.0
        with warnings.catch_warnings():
            # exact zero pivots are reported below as SingularMatrixError
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            self.lu, self.piv = scipy.linalg.lu_factor(A, check_finite=False)
        pivots = np.abs(np.diag(self.lu))
        k = int(np.argmin(pivots))
        if pivots[k] <= PIVOT_TOL * self.norm_inf:
            raise SingularMatrixError(
                f"zero pivot {pivots[k]:.3e} at position {k} (threshold {PIVOT_TOL * self.norm_inf:.3e})"
            )

    def solve(self, B):
        return scipy.linalg.lu_solve((self.lu, self.piv), B, check_finite=False)


def dense_lu_solve(A, B):
    return DenseLU(A).solve(B)


def dense_eigenvalues(A) -> np.ndarray:
    """All eigenvalues of a dense matrix, sorted by (Re, Im).

    Uses LAPACK's Hessenberg reduction followed by shifted QR (``*geev``).
    """
    A = np.asarray(to_dense(A))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"eigenvalues need a square matrix, got shape {A.shape}")
    try:
        lam = np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise EigenvalueError(f"QR iteration did not converge: {exc}") from exc
    lam = np.asarray(lam, dtype=complex)
    if not np.all(np.isfinite(lam)):
        raise EigenvalueError("eigensolver returned non-finite values")
    order = np.lexsort((lam.imag, lam.real))
    return lam[order]


def spectral_radius(A) -> float:
    if np.asarray(A).size == 0:
        return 0.0
    return float(np.max(np.abs(dense_eigenvalues(A))))


@dataclass
class GmresStats:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = False
    true_residual: float = np.nan


def _givens(a, b):
    # rotation [[c, s], [-conj(s), c]] with real c mapping (a, b) -> (r, 0)
    if b == 0:
        return 1.0, 0.0, a
    if a == 0:
        return 0.0, 1.0, b
    abs_a = abs(a)
    t = np.hypot(abs_a, abs(b))
    phase = a / abs_a
    return abs_a / t, phase * np.conj(b) / t, phase * t


def gmres(
    apply_op: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    apply_prec: Callable[[np.ndarray], np.ndarray] | None = None,
    tol: float = 1e-8,
    max_iter: int = 500,
    restart: int = 200,
    x0: np.ndarray | None = None,
):
    """Left-preconditioned restarted GMRES.

    Arnoldi uses modified Gram-Schmidt; the Hessenberg least-squares problem
    is updated with Givens rotations. Works for real or complex data.

    Convergence is declared when the preconditioned residual, relative to
    ``||M^{-1} b||``, drops below ``tol`` *and* the true residual relative to
    ``||b||`` does too; if only the former holds the method restarts from
    the current iterate.

    Returns
    -------
    x : ndarray
    stats : GmresStats
    """
    b = np.asarray(b)
    prec = apply_prec if apply_prec is not None else (lambda v: v)
    dtype = np.result_type(b.dtype, np.float64)
    n = b.shape[0]
    x = np.zeros(n, dtype=dtype) if x0 is None else np.array(x0, dtype=dtype)
    stats = GmresStats()

    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        stats.converged = True
        stats.residual_history = [0.0]
        stats.true_residual = 0.0
        return np.zeros(n, dtype=dtype), stats

    zb_norm = np.linalg.norm(prec(b))
    if zb_norm == 0:
        raise ValueError("preconditioner maps the right-hand side to zero")

    m = max(1, min(restart, n))
    while True:
        r = prec(b - apply_op(x))
        beta = np.linalg.norm(r)
        rel = beta / zb_norm
        if not stats.residual_history:
            stats.residual_history.append(float(rel))
        if rel <= tol:
            true_rel = np.linalg.norm(b - apply_op(x)) / bnorm
            stats.true_residual = float(true_rel)
            if true_rel <= tol:
                stats.converged = True
                return x, stats
        if stats.iterations >= max_iter:
            stats.true_residual = float(np.linalg.norm(b - apply_op(x)) / bnorm)
            return x, stats

        work_dtype = np.result_type(dtype, r.dtype)
        V = np.zeros((m + 1, n), dtype=work_dtype)
        H = np.zeros((m + 1, m), dtype=work_dtype)
        cs = np.zeros(m)
        sn = np.zeros(m, dtype=work_dtype)
        g = np.zeros(m + 1, dtype=work_dtype)
        g[0] = beta
        V[0] = r / beta
        k = 0
        for j in range(m):
            w = prec(apply_op(V[j]))
            w_norm0 = np.linalg.norm(w)
            for i in range(j + 1):
                H[i, j] = np.vdot(V[i], w)
                w = w - H[i, j] * V[i]
            h_next = np.linalg.norm(w)
            H[j + 1, j] = h_next
            breakdown = h_next < 1e-14 * max(w_norm0, 1.0)
            if not breakdown:
                V[j + 1] = w / h_next
            for i in range(j):
                hi, hi1 = H[i, j], H[i + 1, j]
                H[i, j] = cs[i] * hi + sn[i] * hi1
                H[i + 1, j] = -np.conj(sn[i]) * hi + cs[i] * hi1
            cs[j], sn[j], H[j, j] = _givens(H[j, j], H[j + 1, j])
            H[j + 1, j] = 0
            g[j + 1] = -np.conj(sn[j]) * g[j]
            g[j] = cs[j] * g[j]
            k = j + 1
            stats.iterations += 1
            rel = abs(g[j + 1]) / zb_norm
            stats.residual_history.append(float(rel))
            if rel <= tol or breakdown or stats.iterations >= max_iter:
                break
        y = scipy.linalg.solve_triangular(H[:k, :k], g[:k], check_finite=False)
        x = x + V[:k].T @ y


def write_matrix_market(path, A) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), precision=17)


def read_matrix_market(path) -> SparseMatrix:
    return csr(scipy.io.mmread(str(path)))
