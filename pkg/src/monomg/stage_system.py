"""The stage-coupled operator ``I (x) M + dt A (x) K`` and its single-stage pencils.

Stage vectors use the stage-major layout: all dofs of stage 1, then all dofs
of stage 2, and so on.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .fem import FunctionSpace, assemble_load
from .linalg import DenseLU, SparseMatrix, csr, kron_sparse, to_dense
from .tableau import ButcherTableau

MATERIALIZE_CAP = 20000


@dataclass(frozen=True, eq=False)
class StageSystem:
    M: SparseMatrix
    K: SparseMatrix
    tableau: ButcherTableau
    dt: float

    def __post_init__(self):
        if self.M.shape != self.K.shape or self.M.shape[0] != self.M.shape[1]:
            raise ValueError(f"M {self.M.shape} and K {self.K.shape} must be square and equal in shape")
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")

    @property
    def s(self) -> int:
        return self.tableau.s

    @property
    def N(self) -> int:
        return self.M.shape[0]

    @property
    def shape(self):
        n = self.s * self.N
        return (n, n)

    def apply(self, x):
        return apply_stage_operator(self, x)

    def stages(self, x) -> np.ndarray:
        """View a stage vector as an (s, N) array."""
        x = np.asarray(x)
        if x.shape != (self.s * self.N,):
            raise ValueError(f"expected a stage vector of length {self.s * self.N}, got shape {x.shape}")
        return x.reshape(self.s, self.N)


def apply_stage_operator(sys: StageSystem, x) -> np.ndarray:
    X = sys.stages(x)
    MX = (sys.M @ X.T).T
    KX = (sys.K @ X.T).T
    return (MX + sys.dt * (sys.tableau.A @ KX)).ravel()


def materialize(sys: StageSystem, cap: int = MATERIALIZE_CAP) -> SparseMatrix:
    n = sys.s * sys.N
    if n > cap:
        raise ValueError(f"refusing to materialize a {n}x{n} stage operator (cap {cap})")
    return csr(kron_sparse(np.eye(sys.s), sys.M) + kron_sparse(sys.dt * sys.tableau.A, sys.K))


@dataclass(frozen=True)
class ForcingSpec:
    f: Callable
    space: FunctionSpace


def stage_rhs(fs: ForcingSpec, t_n: float, tableau: ButcherTableau, dt: float) -> np.ndarray:
    """Stacked loads ``F(t_n + c_i dt)`` with boundary entries zeroed."""
    bmask = fs.space.is_boundary()
    blocks = []
    for ci in tableau.c:
        F = assemble_load(fs.space, fs.f, t_n + ci * dt)
        F[bmask] = 0.0
        blocks.append(F)
    return np.concatenate(blocks)


def rk_update(u_n, k, tableau: ButcherTableau, dt: float) -> np.ndarray:
    u_n = np.asarray(u_n)
    k = np.asarray(k)
    s, N = tableau.s, u_n.shape[0]
    if k.shape != (s * N,):
        raise ValueError(f"stage vector length {k.shape} does not match s*N = {s * N}")
    return u_n + dt * (tableau.b @ k.reshape(s, N))


def butcher_transform(sys: StageSystem, rhs):
    """Left-multiply the stage system by ``A^{-1} (x) I``.

    Returns ``(apply, rhs_t)`` where ``apply`` is ``A^{-1} (x) M + dt I (x) K``.
    """
    Ainv = DenseLU(sys.tableau.A).solve(np.eye(sys.s))

    def apply(x):
        X = sys.stages(x)
        MX = (sys.M @ X.T).T
        KX = (sys.K @ X.T).T
        return (Ainv @ MX + sys.dt * KX).ravel()

    R = sys.stages(rhs)
    return apply, (Ainv @ R).ravel()


@dataclass(frozen=True, eq=False)
class ComplexPencil:
    """``B_z = M + z K`` for complex ``z``."""

    M: SparseMatrix
    K: SparseMatrix
    z: complex

    def apply(self, x):
        return self.M @ x + self.z * (self.K @ x)

    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.M, dtype=complex) + self.z * sp.csr_matrix(self.K, dtype=complex)

    def dense(self) -> np.ndarray:
        return to_dense(self.M).astype(complex) + self.z * to_dense(self.K)

    def solve(self, b):
        return DenseLU(self.dense()).solve(b)


def characteristic_pencil(M, K, lam, dt) -> ComplexPencil:
    return ComplexPencil(M=M, K=K, z=complex(lam) * dt)


def stage_prolong(P, x, s: int) -> np.ndarray:
    """Apply ``I_s (x) P`` to a stage-major vector."""
    X = np.asarray(x).reshape(s, P.shape[1])
    return (P @ X.T).T.ravel()


def stage_restrict(P, x, s: int) -> np.ndarray:
    """Apply ``I_s (x) P^T`` to a stage-major vector."""
    X = np.asarray(x).reshape(s, P.shape[0])
    return (P.T @ X.T).T.ravel()


def step_rhs(sys: StageSystem, fs: ForcingSpec | None, t_n: float, u_n) -> np.ndarray:
    """Right-hand side of the stage equations for one step from ``u_n``.

    ``M k_i + dt sum_j A_ij K k_j = F(t_n + c_i dt) - K u_n``.
    """
    Ku = sys.K @ np.asarray(u_n)
    rhs = np.tile(-Ku, sys.s)
    if fs is not None:
        rhs = rhs + stage_rhs(fs, t_n, sys.tableau, sys.dt)
    return rhs
