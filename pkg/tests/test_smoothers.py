import numpy as np
import pytest
import scipy.sparse as sp

from conftest import heat_system
from monomg.analysis import characteristic_transform, monolithicity_check
from monomg.fem import FunctionSpace, unit_square_mesh
from monomg.linalg import SingularMatrixError, csr
from monomg.smoothers import (
    PatchDecomposition,
    PatchKind,
    PrecKind,
    make_preconditioner,
    point_jacobi,
    single_dof_patches,
    smooth_apply,
    stage_asm,
    stage_block_jacobi,
    vertex_star_patches,
)
from monomg.stage_system import StageSystem, materialize
from monomg.tableau import custom_tableau, eig_decompose, make_radau_iia


def test_point_jacobi(rng):
    sys, _ = heat_system(3, 1, s=1, dt=0.2)
    pj = point_jacobi(sys)
    d = (sys.M + 0.2 * sys.K).diagonal()
    r = rng.standard_normal(sys.N)
    np.testing.assert_allclose(pj.apply_inverse(r), r / d, rtol=1e-15)
    sys2, _ = heat_system(3, 2, s=3)
    pj2 = point_jacobi(sys2)
    x = rng.standard_normal(3 * sys2.N)
    np.testing.assert_allclose(pj2.apply_inverse(pj2.matrix() @ x), x, atol=1e-14)


def test_point_jacobi_zero_diagonal():
    z = csr(sp.csr_matrix((2, 2)))
    sys = StageSystem(z, z, make_radau_iia(1), 0.1)
    with pytest.raises(SingularMatrixError):
        point_jacobi(sys)


def test_block_jacobi_scalar_block():
    sys = StageSystem(csr([[2.0]]), csr([[3.0]]), custom_tableau([[1.0]], [1.0], [1.0]), 0.5)
    bj = stage_block_jacobi(sys)
    assert bj.matrix()[0, 0] == 3.5
    np.testing.assert_allclose(bj.apply_inverse(np.array([7.0])), [2.0])


def test_block_jacobi_equals_point_jacobi_s1(rng):
    sys, _ = heat_system(3, 2, s=1)
    r = rng.standard_normal(sys.N)
    np.testing.assert_allclose(stage_block_jacobi(sys).apply_inverse(r), point_jacobi(sys).apply_inverse(r),
                               rtol=1e-14, atol=0)


def test_block_jacobi_singular_block():
    # A with eigenvalue -1, m = k = 1, dt = 1 makes I + A singular
    tab = custom_tableau([[-1.0, 0.0], [0.0, 1.0]], [0.5, 0.5], [0.5, 1.0])
    one = csr([[1.0]])
    with pytest.raises(SingularMatrixError, match="dof 0"):
        stage_block_jacobi(StageSystem(one, one, tab, 1.0))


def test_block_jacobi_monolithic():
    sys, _ = heat_system(2, 1, s=2)
    dec = eig_decompose(sys.tableau)
    W = stage_block_jacobi(sys).matrix()
    rep = monolithicity_check(W, dec.X)
    assert rep.is_monolithic
    for i, lam in enumerate(dec.lambdas):
        ref = np.diag(sys.M.diagonal() + lam * sys.dt * sys.K.diagonal())
        assert np.abs(rep.blocks[i] - ref).max() <= 1e-10


def test_point_jacobi_not_monolithic():
    sys, _ = heat_system(2, 1, s=2)
    rep = monolithicity_check(point_jacobi(sys).matrix(), eig_decompose(sys.tableau).X)
    assert not rep.is_monolithic and rep.max_offdiag > 1e-6


def test_vertex_star_p1():
    V = FunctionSpace(unit_square_mesh(4), 1)
    pd = vertex_star_patches(V)
    assert pd.kind is PatchKind.VERTEX_STAR
    assert len(pd) == 9 and all(len(p) == 1 for p in pd.patches)


def test_vertex_star_p2_interior_patch():
    V = FunctionSpace(unit_square_mesh(4), 2)
    pd = vertex_star_patches(V)
    centre = 12  # vertex (0.5, 0.5): six incident triangles
    patch = next(p for p in pd.patches if p[0] == centre)
    assert len(patch) == 7
    m = V.mesh
    edges_at_centre = {V.mesh.nvertices + e for e, (a, b) in enumerate(m.edges) if centre in (a, b)}
    assert set(patch[1:]) == edges_at_centre


@pytest.mark.parametrize("degree", [1, 2])
@pytest.mark.parametrize("n", range(2, 9))
def test_vertex_star_covers_interior(degree, n):
    V = FunctionSpace(unit_square_mesh(n), degree)
    pd = vertex_star_patches(V)
    assert pd.covers_interior()
    allp = np.concatenate(pd.patches)
    assert not np.isin(allp, V.boundary_dofs).any()
    assert all(np.all(np.diff(p) > 0) for p in pd.patches)


def test_patch_validation():
    V = FunctionSpace(unit_square_mesh(2), 1)
    with pytest.raises(ValueError):
        PatchDecomposition([[]], V)
    with pytest.raises(ValueError):
        PatchDecomposition([[0, 99]], V)
    assert PatchDecomposition([[4, 1, 4]], V).patches[0].tolist() == [1, 4]
    assert vertex_star_patches(V).to_text() == "4\n"


@pytest.mark.parametrize("s", [1, 2, 3])
@pytest.mark.parametrize("degree", [1, 2])
def test_single_dof_asm_equals_block_jacobi(s, degree, rng):
    sys, V = heat_system(4, degree, s=s)
    asm = stage_asm(sys, single_dof_patches(V))
    bj = stage_block_jacobi(sys)
    r = rng.standard_normal(s * sys.N)
    a = asm.apply_inverse(r).reshape(s, -1)
    b = bj.apply_inverse(r).reshape(s, -1)
    assert np.abs(a - b)[:, V.interior_dofs].max() <= 1e-13
    np.testing.assert_array_equal(a[:, V.boundary_dofs], r.reshape(s, -1)[:, V.boundary_dofs])


def test_asm_exact_single_patch(rng):
    sys, V = heat_system(3, 2, s=1)
    asm = stage_asm(sys, PatchDecomposition([V.interior_dofs], V))
    xstar = rng.standard_normal(sys.N)
    b = sys.apply(xstar)
    x = smooth_apply(asm, sys, np.zeros(sys.N), b, nu=1, omega=1.0)
    assert np.abs(x - xstar).max() <= 1e-10


def test_asm_additive(rng):
    sys, V = heat_system(3, 2, s=2)
    asm = make_preconditioner(PrecKind.ASM, sys, V)
    r1, r2 = rng.standard_normal((2, 2 * sys.N))
    np.testing.assert_allclose(asm.apply_inverse(r1 + r2), asm.apply_inverse(r1) + asm.apply_inverse(r2),
                               atol=1e-13)
    np.testing.assert_array_equal(asm.apply_inverse(r1), asm.apply_inverse(r1))


def test_asm_monolithic_p2():
    sys, V = heat_system(2, 2, s=2)
    dec = eig_decompose(sys.tableau)
    asm = make_preconditioner(PrecKind.ASM, sys, V)
    rep = monolithicity_check(asm.matrix(), dec.X)
    assert rep.max_offdiag <= 1e-10


def test_asm_equals_characteristic_asm():
    sys, V = heat_system(2, 2, s=2)
    dec = eig_decompose(sys.tableau)
    asm = make_preconditioner(PrecKind.ASM, sys, V)
    n = 2 * sys.N
    Winv = np.column_stack([asm.apply_inverse(e) for e in np.eye(n)])
    blocks = characteristic_transform(Winv, dec.X)
    for i, lam in enumerate(dec.lambdas):
        C = sys.M.toarray() + lam * sys.dt * sys.K.toarray()
        ref = np.zeros((sys.N, sys.N), dtype=complex)
        covered = np.zeros(sys.N, dtype=bool)
        for p in vertex_star_patches(V).patches:
            ref[np.ix_(p, p)] += np.linalg.inv(C[np.ix_(p, p)])
            covered[p] = True
        ref[~covered, ~covered] = 1.0
        assert np.abs(blocks[i, i] - ref).max() <= 1e-10


def test_p1_asm_reproduces_block_jacobi(rng):
    for s in (1, 2, 3):
        sys, V = heat_system(4, 1, s=s)
        r = rng.standard_normal(s * sys.N)
        a = make_preconditioner(PrecKind.ASM, sys, V).apply_inverse(r).reshape(s, -1)
        b = stage_block_jacobi(sys).apply_inverse(r).reshape(s, -1)
        assert np.abs(a - b)[:, V.interior_dofs].max() <= 1e-13


def test_boundary_untouched_by_smoothing(rng):
    sys, V = heat_system(3, 2, s=2)
    for kind in PrecKind:
        prec = make_preconditioner(kind, sys, V)
        x = rng.standard_normal(2 * sys.N)
        b = sys.apply(x)
        b_mod = b.copy()
        y = smooth_apply(prec, sys, x, b_mod, nu=3, omega=2 / 3)
        idx = np.concatenate([V.boundary_dofs + k * sys.N for k in range(2)])
        np.testing.assert_allclose(y[idx], x[idx], atol=1e-14)


def test_smooth_apply_basics(rng):
    sys, V = heat_system(4, 1, s=2)
    bj = stage_block_jacobi(sys)
    x = rng.standard_normal(2 * sys.N)
    b = rng.standard_normal(2 * sys.N)
    np.testing.assert_array_equal(smooth_apply(bj, sys, x, b, nu=0), x)
    with pytest.raises(ValueError):
        smooth_apply(bj, sys, x[:-1], b, nu=1)
    with pytest.raises(ValueError):
        smooth_apply(bj, sys, x, b, nu=-1)
    # error decreases monotonically for damped block Jacobi
    xstar = rng.standard_normal(2 * sys.N)
    b = sys.apply(xstar)
    x = np.zeros_like(b)
    errs = [np.linalg.norm(x - xstar)]
    for _ in range(10):
        x = smooth_apply(bj, sys, x, b, nu=1, omega=2 / 3)
        errs.append(np.linalg.norm(x - xstar))
    assert all(b_ < a for a, b_ in zip(errs, errs[1:]))


def test_make_preconditioner_requires_space():
    sys, _ = heat_system(2, 1)
    with pytest.raises(ValueError):
        make_preconditioner("asm-star", sys)
    with pytest.raises(ValueError):
        make_preconditioner("gauss-seidel", sys)
