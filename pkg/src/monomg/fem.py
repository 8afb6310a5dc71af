"""P1/P2 Lagrange finite elements on nested triangulations of the unit square."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .linalg import SparseMatrix, csr

# Degree-4 symmetric 6-point rule on the reference triangle (weights sum to 1).
_A1, _W1 = 0.44594849091596488632, 0.22338158967801146570
_A2, _W2 = 0.091576213509770743460, 0.10995174365532186764
QUAD_BARY = np.array(
    [
        [1 - 2 * _A1, _A1, _A1],
        [_A1, 1 - 2 * _A1, _A1],
        [_A1, _A1, 1 - 2 * _A1],
        [1 - 2 * _A2, _A2, _A2],
        [_A2, 1 - 2 * _A2, _A2],
        [_A2, _A2, 1 - 2 * _A2],
    ]
)
QUAD_WEIGHTS = np.array([_W1, _W1, _W1, _W2, _W2, _W2])


@dataclass(eq=False)
class Mesh:
    """Triangulation with counterclockwise triangles.

    ``vertex_origin[v] = (a, b)`` records provenance on refined meshes: the
    fine vertex equals coarse vertex ``a`` when ``a == b`` and bisects the
    coarse edge ``(a, b)`` otherwise. ``parent_triangle[t]`` is the coarse
    triangle containing fine triangle ``t``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    level: int = 0
    parent: "Mesh | None" = None
    vertex_origin: np.ndarray | None = None
    parent_triangle: np.ndarray | None = None
    edges: np.ndarray = field(init=False, repr=False)
    boundary_vertices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        areas = self.signed_areas()
        if np.any(areas <= 0):
            bad = int(np.argmin(areas))
            raise ValueError(f"triangle {bad} has non-positive signed area {areas[bad]:.3e}")
        self.edges = _unique_edges(self.triangles)
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        on_bdry = (x == 0) | (x == 1) | (y == 0) | (y == 1)
        self.boundary_vertices = np.flatnonzero(on_bdry)

    @property
    def nvertices(self) -> int:
        return len(self.vertices)

    @property
    def ntriangles(self) -> int:
        return len(self.triangles)

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_index(self, a, b) -> np.ndarray:
        """Indices into ``self.edges`` for vertex pairs ``(a, b)`` (any order)."""
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        nv = self.nvertices
        keys = self.edges[:, 0] * nv + self.edges[:, 1]
        want = lo * nv + hi
        idx = np.searchsorted(keys, want)
        if np.any(idx >= len(keys)) or np.any(keys[np.minimum(idx, len(keys) - 1)] != want):
            raise KeyError("vertex pair is not an edge of the mesh")
        return idx

    def to_text(self) -> str:
        lines = [f"{x:.17g} {y:.17g}" for x, y in self.vertices]
        lines.append("")
        lines += [f"{i} {j} {k}" for i, j, k in self.triangles]
        return "\n".join(lines) + "\n"


def _unique_edges(triangles):
    e = np.concatenate([triangles[:, [1, 2]], triangles[:, [2, 0]], triangles[:, [0, 1]]])
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


def unit_square_mesh(n: int) -> Mesh:
    """``n x n`` squares, each cut along the (i, j)-(i+1, j+1) diagonal."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"cells per side must be a positive integer, got {n!r}")
    coords = np.arange(n + 1) / n
    X, Y = np.meshgrid(coords, coords)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    j, i = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return Mesh(vertices, triangles)


def refine(m: Mesh) -> Mesh:
    """Red refinement: every triangle split into four through edge midpoints."""
    nv = m.nvertices
    mid = m.vertices[m.edges].mean(axis=1)
    vertices = np.vstack([m.vertices, mid])
    origin = np.vstack([np.column_stack([np.arange(nv), np.arange(nv)]), m.edges])

    t = m.triangles
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    mab = nv + m.edge_index(a, b)
    mbc = nv + m.edge_index(b, c)
    mca = nv + m.edge_index(c, a)
    children = np.stack(
        [
            np.column_stack([a, mab, mca]),
            np.column_stack([mab, b, mbc]),
            np.column_stack([mca, mbc, c]),
            np.column_stack([mab, mbc, mca]),
        ],
        axis=1,
    ).reshape(-1, 3)
    parent_tri = np.repeat(np.arange(m.ntriangles), 4)
    return Mesh(
        vertices,
        children,
        level=m.level + 1,
        parent=m,
        vertex_origin=origin,
        parent_triangle=parent_tri,
    )


def _ref_basis(degree, bary):
    """Basis values (nq, nloc) and barycentric-gradient coefficients.

    Returns ``phi`` and ``dphi_dbary`` with shape (nq, nloc, 3): derivative of
    each local basis function with respect to each barycentric coordinate.
    """
    L0, L1, L2 = bary[:, 0], bary[:, 1], bary[:, 2]
    nq = len(bary)
    if degree == 1:
        phi = bary.copy()
        dphi = np.broadcast_to(np.eye(3), (nq, 3, 3)).copy()
        return phi, dphi
    if degree == 2:
        phi = np.column_stack(
            [L0 * (2 * L0 - 1), L1 * (2 * L1 - 1), L2 * (2 * L2 - 1), 4 * L1 * L2, 4 * L2 * L0, 4 * L0 * L1]
        )
        dphi = np.zeros((nq, 6, 3))
        for k, L in enumerate((L0, L1, L2)):
            dphi[:, k, k] = 4 * L - 1
        dphi[:, 3, 1], dphi[:, 3, 2] = 4 * L2, 4 * L1
        dphi[:, 4, 2], dphi[:, 4, 0] = 4 * L0, 4 * L2
        dphi[:, 5, 0], dphi[:, 5, 1] = 4 * L1, 4 * L0
        return phi, dphi
    raise ValueError(f"degree must be 1 or 2, got {degree}")


@dataclass(eq=False)
class FunctionSpace:
    """Continuous Lagrange space of degree 1 or 2.

    Dofs are numbered vertices first, then (for P2) edges in ``mesh.edges``
    order. Local P2 ordering per triangle: three vertices, then the edges
    opposite vertex 0, 1, 2.
    """

    mesh: Mesh
    degree: int = 1

    def __post_init__(self):
        if self.degree not in (1, 2):
            raise ValueError(f"degree must be 1 or 2, got {self.degree}")
        m = self.mesh
        t = m.triangles
        if self.degree == 1:
            self.cell_dofs = t.copy()
            self.dof_coords = m.vertices.copy()
        else:
            nv = m.nvertices
            e0 = nv + m.edge_index(t[:, 1], t[:, 2])
            e1 = nv + m.edge_index(t[:, 2], t[:, 0])
            e2 = nv + m.edge_index(t[:, 0], t[:, 1])
            self.cell_dofs = np.column_stack([t, e0, e1, e2])
            self.dof_coords = np.vstack([m.vertices, m.vertices[m.edges].mean(axis=1)])
        x, y = self.dof_coords[:, 0], self.dof_coords[:, 1]
        self.boundary_dofs = np.flatnonzero((x == 0) | (x == 1) | (y == 0) | (y == 1))
        self.interior_dofs = np.setdiff1d(np.arange(self.ndof), self.boundary_dofs)

    @property
    def ndof(self) -> int:
        return len(self.dof_coords)

    @property
    def nloc(self) -> int:
        return self.cell_dofs.shape[1]

    def is_boundary(self) -> np.ndarray:
        mask = np.zeros(self.ndof, dtype=bool)
        mask[self.boundary_dofs] = True
        return mask

    def interpolate(self, g: Callable) -> np.ndarray:
        x, y = self.dof_coords[:, 0], self.dof_coords[:, 1]
        return np.broadcast_to(np.asarray(g(x, y), dtype=float), x.shape).copy()


@dataclass(eq=False)
class AssembledForms:
    M: SparseMatrix
    K: SparseMatrix
    space: FunctionSpace
    bc_applied: bool = False


def _geometry(mesh):
    p = mesh.vertices[mesh.triangles]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edge vectors
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    if np.any(np.abs(det) <= 1e-14 * np.abs(J).max() ** 2):
        raise ValueError("degenerate triangle in mesh")
    invJ = np.linalg.inv(J)
    return p, det, invJ


def local_matrices(space: FunctionSpace):
    """Element mass and stiffness matrices, shape (ntri, nloc, nloc)."""
    p, det, invJ = _geometry(space.mesh)
    phi, dphi_bary = _ref_basis(space.degree, QUAD_BARY)
    # reference gradient d/dxi = d/dL1 - d/dL0, d/deta = d/dL2 - d/dL0
    dref = np.stack([dphi_bary[:, :, 1] - dphi_bary[:, :, 0], dphi_bary[:, :, 2] - dphi_bary[:, :, 0]], axis=2)
    w = 0.5 * QUAD_WEIGHTS
    mass_ref = np.einsum("q,qi,qj->ij", w, phi, phi)
    Me = np.abs(det)[:, None, None] * mass_ref[None]
    # physical gradient = invJ^T grad_ref
    grads = np.einsum("tkd,qik->tqid", invJ, dref)
    Ke = np.abs(det)[:, None, None] * np.einsum("q,tqid,tqjd->tij", w, grads, grads)
    return Me, Ke


def _scatter(space, local):
    cd = space.cell_dofs
    nloc = cd.shape[1]
    rows = np.repeat(cd, nloc, axis=1).ravel()
    cols = np.tile(cd, (1, nloc)).ravel()
    n = space.ndof
    return csr(sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)))


def assemble(space: FunctionSpace) -> AssembledForms:
    Me, Ke = local_matrices(space)
    return AssembledForms(M=_scatter(space, Me), K=_scatter(space, Ke), space=space)


def quadrature_points(space: FunctionSpace):
    """Physical quadrature points (ntri, nq, 2) and weights (ntri, nq)."""
    p, det, _ = _geometry(space.mesh)
    pts = np.einsum("qk,tkd->tqd", QUAD_BARY, p)
    wts = 0.5 * np.abs(det)[:, None] * QUAD_WEIGHTS[None, :]
    return pts, wts


def assemble_load(space: FunctionSpace, f: Callable, t: float = 0.0) -> np.ndarray:
    """``F_i = int f(x, y, t) phi_i``; ``f`` is evaluated on coordinate arrays."""
    pts, wts = quadrature_points(space)
    vals = np.broadcast_to(np.asarray(f(pts[..., 0], pts[..., 1], t), dtype=float), wts.shape)
    phi, _ = _ref_basis(space.degree, QUAD_BARY)
    local = np.einsum("tq,qi->ti", wts * vals, phi)
    F = np.zeros(space.ndof)
    np.add.at(F, space.cell_dofs.ravel(), local.ravel())
    return F


def l2_norm(space: FunctionSpace, u: np.ndarray, g: Callable | None = None) -> float:
    """L2 norm of the discrete function ``u`` (minus ``g`` if given)."""
    pts, wts = quadrature_points(space)
    phi, _ = _ref_basis(space.degree, QUAD_BARY)
    uq = np.einsum("qi,ti->tq", phi, u[space.cell_dofs])
    if g is not None:
        uq = uq - np.broadcast_to(g(pts[..., 0], pts[..., 1]), uq.shape)
    return float(np.sqrt(np.sum(wts * uq**2)))


def prolongation(coarse: FunctionSpace, fine: FunctionSpace) -> SparseMatrix:
    """Matrix of the inclusion ``V_H -> V_h`` between nested spaces.

    Column ``j`` holds the values of coarse basis function ``j`` at the fine
    nodes.
    """
    fm, cm = fine.mesh, coarse.mesh
    if fm.parent is not cm:
        raise ValueError("fine mesh is not a refinement of the coarse mesh")
    if fine.degree != coarse.degree:
        raise ValueError(f"degree mismatch: coarse {coarse.degree}, fine {fine.degree}")

    # one fine triangle per fine dof, then its coarse parent
    owner = np.full(fine.ndof, -1, dtype=np.int64)
    flat = fine.cell_dofs.ravel()
    tri_of = np.repeat(np.arange(fm.ntriangles), fine.nloc)
    owner[flat[::-1]] = tri_of[::-1]
    ctri = fm.parent_triangle[owner]

    cp = cm.vertices[cm.triangles[ctri]]  # (ndof, 3, 2)
    J = np.stack([cp[:, 1] - cp[:, 0], cp[:, 2] - cp[:, 0]], axis=2)
    rhs = fine.dof_coords - cp[:, 0]
    xi_eta = np.linalg.solve(J, rhs[..., None])[..., 0]
    bary = np.column_stack([1 - xi_eta.sum(axis=1), xi_eta])
    bary[np.abs(bary) < 1e-14] = 0.0
    phi, _ = _ref_basis(coarse.degree, bary)
    phi[np.abs(phi) < 1e-14] = 0.0

    rows = np.repeat(np.arange(fine.ndof), coarse.nloc)
    cols = coarse.cell_dofs[ctri].ravel()
    P = sp.coo_matrix((phi.ravel(), (rows, cols)), shape=(fine.ndof, coarse.ndof)).tocsr()
    # duplicates cannot occur (one owner triangle per row); keep them from summing anyway
    P.sum_duplicates()
    return csr(P)


def apply_dirichlet(forms: AssembledForms) -> AssembledForms:
    """Symmetric elimination of boundary dofs: ``M_ii = 1``, ``K_ii = 0``.

    Every pencil ``M + z K`` is then the identity on boundary dofs, so those
    stage values stay inert.
    """
    bmask = forms.space.is_boundary()
    keep = sp.diags((~bmask).astype(float))
    M = keep @ forms.M @ keep + sp.diags(bmask.astype(float))
    K = keep @ forms.K @ keep
    return AssembledForms(M=csr(M), K=csr(K), space=forms.space, bc_applied=True)
