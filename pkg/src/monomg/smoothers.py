"""Preconditioners ``W`` for the stage-coupled system and the damped smoother.

All three variants (point Jacobi, stage-coupled block Jacobi, stage-coupled
additive Schwarz) share one kernel: a list of index sets, each with a dense
inverse of the operator restricted to it, applied additively. Indices not
covered by any set are passed through unchanged (``W`` acts as the
identity there).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import FunctionSpace
from .linalg import SingularMatrixError, kron_sparse, to_dense
from .stage_system import StageSystem, apply_stage_operator, materialize


class PatchKind(str, enum.Enum):
    VERTEX_STAR = "VertexStar"
    SINGLE_DOF = "SingleDof"
    CUSTOM = "Custom"


class PrecKind(str, enum.Enum):
    POINT_JACOBI = "point-jacobi"
    BLOCK_JACOBI = "block-jacobi"
    ASM = "asm-star"


@dataclass
class PatchDecomposition:
    patches: list
    space: FunctionSpace
    kind: PatchKind = PatchKind.CUSTOM

    def __post_init__(self):
        clean = []
        for k, p in enumerate(self.patches):
            p = np.unique(np.asarray(p, dtype=np.int64))
            if p.size == 0:
                raise ValueError(f"patch {k} is empty")
            if p[0] < 0 or p[-1] >= self.space.ndof:
                raise ValueError(f"patch {k} has dof indices outside [0, {self.space.ndof})")
            clean.append(p)
        self.patches = clean

    def __len__(self):
        return len(self.patches)

    def covers_interior(self) -> bool:
        covered = np.unique(np.concatenate(self.patches)) if self.patches else np.array([], dtype=int)
        return bool(np.all(np.isin(self.space.interior_dofs, covered)))

    def to_text(self) -> str:
        return "".join(" ".join(map(str, p)) + "\n" for p in self.patches)


def vertex_star_patches(space: FunctionSpace) -> PatchDecomposition:
    """Patches of dofs whose basis functions live inside one vertex star.

    For each vertex ``v`` the patch holds the dof of ``v`` and, for P2, the
    midpoint dofs of the edges incident to ``v``; boundary dofs are removed
    and empty patches dropped. Boundary vertices are included so that P2
    midpoints of edges joining two boundary vertices are still covered.
    """
    m = space.mesh
    nv = m.nvertices
    bmask = space.is_boundary()
    members = [[v] for v in range(nv)]
    if space.degree == 2:
        for e, (a, b) in enumerate(m.edges):
            members[a].append(nv + e)
            members[b].append(nv + e)
    patches = []
    for dofs in members:
        dofs = [d for d in dofs if not bmask[d]]
        if dofs:
            patches.append(sorted(dofs))
    return PatchDecomposition(patches, space, PatchKind.VERTEX_STAR)


def single_dof_patches(space: FunctionSpace) -> PatchDecomposition:
    return PatchDecomposition([[i] for i in space.interior_dofs], space, PatchKind.SINGLE_DOF)


def _batched_inverse(blocks, where):
    try:
        inv = np.linalg.inv(blocks)
    except np.linalg.LinAlgError:
        inv = None
    if inv is None or not np.all(np.isfinite(inv)):
        for k, blk in enumerate(blocks):
            if not np.all(np.isfinite(blk)) or np.linalg.cond(blk) > 1e14:
                raise SingularMatrixError(f"singular block for {where} {k}")
        raise SingularMatrixError(f"singular block among {where}s")
    return inv


def _scatter_add(out, idx, vals):
    # fixed-order accumulation so results do not depend on patch scheduling
    n = out.shape[0]
    flat = idx.ravel()
    v = vals.ravel()
    if np.iscomplexobj(v):
        out += np.bincount(flat, weights=v.real, minlength=n) + 1j * np.bincount(flat, weights=v.imag, minlength=n)
    else:
        out += np.bincount(flat, weights=v, minlength=n)


class SubspaceInverse:
    """``sum_k P_k (R_k C P_k)^{-1} R_k`` plus identity on uncovered indices.

    ``index_sets`` are grouped by size so that each group is inverted and
    applied as one batched dense operation.
    """

    def __init__(self, C, index_sets, n: int | None = None, passthrough=None, label="patch"):
        C = C.tocsr() if hasattr(C, "tocsr") else np.asarray(C)
        self.n = C.shape[0] if n is None else n
        self.dtype = np.result_type(C.dtype, np.float64)
        by_size: dict[int, list] = {}
        for k, ids in enumerate(index_sets):
            ids = np.asarray(ids, dtype=np.int64)
            by_size.setdefault(len(ids), []).append((k, ids))
        self.groups = []
        for size in sorted(by_size):
            entries = by_size[size]
            idx = np.stack([ids for _, ids in entries])
            blocks = np.stack([to_dense(C[ids][:, ids]) for _, ids in entries]).astype(self.dtype)
            try:
                inv = _batched_inverse(blocks, label)
            except SingularMatrixError as exc:
                raise SingularMatrixError(f"{exc} (size-{size} group, ids {[k for k, _ in entries][:5]}...)") from exc
            self.groups.append((idx, inv))
        if passthrough is None:
            covered = np.zeros(self.n, dtype=bool)
            for idx, _ in self.groups:
                covered[idx.ravel()] = True
            passthrough = np.flatnonzero(~covered)
        self.passthrough = np.asarray(passthrough, dtype=np.int64)

    def __call__(self, r):
        r = np.asarray(r)
        if r.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got shape {r.shape}")
        out = np.zeros(self.n, dtype=np.result_type(self.dtype, r.dtype))
        out[self.passthrough] = r[self.passthrough]
        for idx, inv in self.groups:
            _scatter_add(out, idx, np.einsum("kij,kj->ki", inv, r[idx]))
        return out


class Preconditioner:
    """Applies ``W^{-1}`` for a stage system; ``W`` itself via :meth:`matrix`."""

    def __init__(self, kind: PrecKind, sys: StageSystem, apply_inverse, W=None, patches=None):
        self.kind = PrecKind(kind)
        self.sys = sys
        self._apply_inverse = apply_inverse
        self._W = W
        self.patches = patches

    def apply_inverse(self, r):
        return self._apply_inverse(r)

    def matrix(self) -> np.ndarray:
        """Dense ``W`` (desk scale only)."""
        if self._W is not None:
            return to_dense(self._W)
        n = self.sys.s * self.sys.N
        Winv = np.column_stack([self.apply_inverse(e) for e in np.eye(n)])
        return np.linalg.inv(Winv)


def point_jacobi(sys: StageSystem) -> Preconditioner:
    dM = sys.M.diagonal()
    dK = sys.K.diagonal()
    diag = (dM[None, :] + sys.dt * np.diag(sys.tableau.A)[:, None] * dK[None, :]).ravel()
    zero = np.flatnonzero(diag == 0)
    if zero.size:
        raise SingularMatrixError(f"zero diagonal entry at stage-vector index {zero[0]}")

    def apply_inverse(r):
        return np.asarray(r) / diag

    return Preconditioner(PrecKind.POINT_JACOBI, sys, apply_inverse, W=sp.diags(diag))


def stage_block_jacobi(sys: StageSystem) -> Preconditioner:
    """Per-dof dense ``s x s`` blocks ``m_ii I + dt k_ii A``."""
    s, N = sys.s, sys.N
    dM = sys.M.diagonal()
    dK = sys.K.diagonal()
    A = sys.tableau.A
    blocks = dM[:, None, None] * np.eye(s)[None] + (sys.dt * dK)[:, None, None] * A[None]
    try:
        inv = _batched_inverse(blocks, "dof")
    except SingularMatrixError:
        for i, blk in enumerate(blocks):
            if abs(np.linalg.det(blk)) <= 1e-14 * np.abs(blk).max() ** s:
                raise SingularMatrixError(f"singular stage block at dof {i}") from None
        raise

    def apply_inverse(r):
        R = sys.stages(r)
        return np.einsum("nij,jn->in", inv, R).ravel()

    W = kron_sparse(np.eye(s), sp.diags(dM)) + kron_sparse(sys.dt * A, sp.diags(dK))
    return Preconditioner(PrecKind.BLOCK_JACOBI, sys, apply_inverse, W=W)


def stage_patch_indices(patches, N: int, s: int) -> list:
    """All ``s`` stage copies of each patch in the stage-major layout."""
    return [np.concatenate([p + k * N for k in range(s)]) for p in patches]


def stage_asm(sys: StageSystem, pd: PatchDecomposition, B=None) -> Preconditioner:
    """Additive Schwarz over the ``s``-fold product of each spatial patch.

    Patch blocks are cut out of the materialized ``B``; indices outside every
    patch (the boundary dofs) pass through unchanged.
    """
    if pd.space.ndof != sys.N:
        raise ValueError("patch decomposition and stage system have different dof counts")
    B = materialize(sys) if B is None else B
    ids = stage_patch_indices(pd.patches, sys.N, sys.s)
    inv = SubspaceInverse(B, ids, label="patch")
    return Preconditioner(PrecKind.ASM, sys, inv, patches=pd)


def make_preconditioner(kind, sys: StageSystem, space: FunctionSpace | None = None) -> Preconditioner:
    kind = PrecKind(kind)
    if kind is PrecKind.POINT_JACOBI:
        return point_jacobi(sys)
    if kind is PrecKind.BLOCK_JACOBI:
        return stage_block_jacobi(sys)
    if space is None:
        raise ValueError("additive Schwarz needs the function space to build patches")
    return stage_asm(sys, vertex_star_patches(space))


def smooth_apply(prec: Preconditioner, sys: StageSystem, x, b, nu: int = 1, omega: float = 1.0):
    """``nu`` sweeps of ``x <- x - omega W^{-1} (B x - b)``."""
    if nu < 0:
        raise ValueError("sweep count must be non-negative")
    x = np.array(x, copy=True)
    b = np.asarray(b)
    if x.shape != b.shape or x.shape != (sys.s * sys.N,):
        raise ValueError(f"x {x.shape} and b {b.shape} must both have length {sys.s * sys.N}")
    for _ in range(nu):
        x = x - omega * prec.apply_inverse(apply_stage_operator(sys, x) - b)
    return x
