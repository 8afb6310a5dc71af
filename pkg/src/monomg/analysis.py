"""Dense desk-scale checks of the characteristic-stage decomposition.

The coupled side densifies the real operators actually used by the solver;
the characteristic side rebuilds every single-stage operator from freshly
assembled ``M``, ``K`` in complex arithmetic, so comparing the two is not
circular.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .fem import apply_dirichlet, assemble
from .linalg import DenseLU, spectral_radius, to_dense
from .multigrid import MgConfig, MgLevel, build_hierarchy, cycle, two_grid_step
from .smoothers import PrecKind, vertex_star_patches
from .stage_system import characteristic_pencil, materialize
from .tableau import eig_decompose, make_tableau

DENSIFY_CAP = 3000


@dataclass
class MonolithicityReport:
    is_monolithic: bool
    max_offdiag: float
    blocks: list
    tol: float


@dataclass
class SpectralReport:
    rho_coupled: float
    rho_blocks: np.ndarray
    max_block_rho: float
    discrepancy: float
    max_offdiag: float = np.nan
    extra: dict = field(default_factory=dict)


def densify_operator(op, dim: int, cap: int = DENSIFY_CAP) -> np.ndarray:
    """Dense matrix whose column ``j`` is ``op(e_j)``."""
    if dim > cap:
        raise ValueError(f"refusing to densify a {dim}x{dim} operator (cap {cap})")
    cols = [np.asarray(op(e)) for e in np.eye(dim)]
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def characteristic_transform(Y, X) -> np.ndarray:
    """Blocks of ``(X^{-1} (x) I) Y (X (x) I)``, shape ``(s, s, N, N)``."""
    Y = np.asarray(to_dense(Y))
    X = np.asarray(X, dtype=complex)
    s = X.shape[0]
    if Y.shape[0] != Y.shape[1] or Y.shape[0] % s:
        raise ValueError(f"operator of shape {Y.shape} is not an s x s block matrix for s={s}")
    N = Y.shape[0] // s
    Xinv = DenseLU(X).solve(np.eye(s, dtype=complex))
    Y4 = Y.reshape(s, N, s, N)
    right = np.einsum("kalb,lj->kajb", Y4, X)
    return np.einsum("ik,kajb->ijab", Xinv, right)


def assemble_blocks(blocks, X) -> np.ndarray:
    """Inverse of :func:`characteristic_transform`."""
    X = np.asarray(X, dtype=complex)
    s, _, N, _ = blocks.shape
    Xinv = DenseLU(X).solve(np.eye(s, dtype=complex))
    Y4 = np.einsum("ki,ijab,jl->kalb", X, blocks, Xinv)
    return Y4.reshape(s * N, s * N)


def monolithicity_check(Y, X, tol: float = 1e-9) -> MonolithicityReport:
    Y = np.asarray(to_dense(Y))
    blocks = characteristic_transform(Y, X)
    s = blocks.shape[0]
    scale = np.abs(Y).max() or 1.0
    off = 0.0
    for i in range(s):
        for j in range(s):
            if i != j:
                off = max(off, float(np.abs(blocks[i, j]).max()))
    rel = off / scale
    return MonolithicityReport(
        is_monolithic=rel <= tol, max_offdiag=rel, blocks=[blocks[i, i] for i in range(s)], tol=tol
    )


# characteristic (single-stage, complex) side ------------------------------------


@dataclass(eq=False)
class _CharLevel:
    C: np.ndarray  # dense pencil M + z K
    Winv: np.ndarray | None
    P: np.ndarray | None  # prolongation to the next finer level


def _dense_schwarz_inverse(C, patches, n):
    Winv = np.zeros((n, n), dtype=complex)
    covered = np.zeros(n, dtype=bool)
    for p in patches:
        Winv[np.ix_(p, p)] += np.linalg.inv(C[np.ix_(p, p)])
        covered[p] = True
    for i in np.flatnonzero(~covered):
        Winv[i, i] += 1.0
    return Winv


def characteristic_smoother_inverse(kind, C, M, K, z, space) -> np.ndarray:
    """Dense ``W_i^{-1}`` of the single-stage smoother matching a coupled one."""
    kind = PrecKind(kind)
    n = C.shape[0]
    if kind is PrecKind.BLOCK_JACOBI:
        return np.diag(1.0 / (M.diagonal() + z * K.diagonal()))
    if kind is PrecKind.ASM:
        return _dense_schwarz_inverse(C, vertex_star_patches(space).patches, n)
    raise ValueError(f"{kind.value} is not monolithic; it has no characteristic smoother")


def _characteristic_levels(levels: list[MgLevel], lam: complex, dt: float, kind, extracted=None):
    out = []
    for k, lev in enumerate(levels):
        forms = apply_dirichlet(assemble(lev.space))
        pencil = characteristic_pencil(forms.M, forms.K, lam, dt)
        C = pencil.dense()
        Winv = None
        if k:
            if extracted is not None:
                Winv = np.linalg.inv(extracted[k])
            else:
                Winv = characteristic_smoother_inverse(kind, C, forms.M, forms.K, pencil.z, lev.space)
        P = to_dense(lev.P) if lev.P is not None else None
        out.append(_CharLevel(C=C, Winv=Winv, P=P))
    return out


def _smoothing_matrix(lev: _CharLevel, omega):
    n = lev.C.shape[0]
    return np.eye(n) - omega * lev.Winv @ lev.C


def characteristic_cycle_matrix(clevels: list[_CharLevel], cfg: MgConfig, two_grid: bool = False) -> np.ndarray:
    """Dense error propagation of the single-stage cycle.

    ``T_0 = 0`` and ``T_l = S^nu_post (I - P (I - T_{l-1}^gamma) C_{l-1}^{-1} P^T C_l) S^nu_pre``
    (pre-smoothing runs first, so it is the rightmost factor). With
    ``two_grid`` the coarse level is solved exactly regardless of depth.
    """
    T = None
    start = len(clevels) - 2 if two_grid else 0
    for k in range(start + 1, len(clevels)):
        fine, coarse = clevels[k], clevels[k - 1]
        n = fine.C.shape[0]
        nc = coarse.C.shape[0]
        inner = np.eye(nc) if T is None else np.eye(nc) - np.linalg.matrix_power(T, cfg.gamma)
        Ccinv = np.linalg.inv(coarse.C)
        cgc = np.eye(n) - coarse.P @ inner @ Ccinv @ coarse.P.T @ fine.C
        S = _smoothing_matrix(fine, cfg.omega)
        T = np.linalg.matrix_power(S, cfg.nu_post) @ cgc @ np.linalg.matrix_power(S, cfg.nu_pre)
    return T


def build_characteristic_two_grid(levels: list[MgLevel], cfg: MgConfig, lam: complex, kind=None, W_block=None):
    """``T_i`` for the two finest levels of ``levels`` with time step ``lam * dt``.

    ``W_block`` optionally supplies the fine-level smoother block ``W_i``
    (e.g. read off the coupled ``W``); by default it is rebuilt from scratch.
    """
    pair = levels[-2:]
    kind = kind or pair[-1].prec.kind
    extracted = None if W_block is None else {1: W_block}
    clevels = _characteristic_levels(pair, lam, pair[-1].sys.dt, kind, extracted)
    return characteristic_cycle_matrix(clevels, cfg, two_grid=True)


def coupled_cycle_matrix(levels: list[MgLevel], cfg: MgConfig, two_grid: bool = False) -> np.ndarray:
    top = levels[-1]
    dim = top.sys.shape[0]
    zero = np.zeros(dim)
    if two_grid:
        return densify_operator(lambda e: two_grid_step(levels[-1], levels[-2], cfg, e, zero), dim)
    return densify_operator(lambda e: cycle(levels, cfg, len(levels) - 1, e, zero), dim)


def verify_spectral_theorem(levels: list[MgLevel], cfg: MgConfig, two_grid: bool = True) -> SpectralReport:
    top = levels[-1]
    dec = eig_decompose(top.sys.tableau)
    T = coupled_cycle_matrix(levels, cfg, two_grid=two_grid)
    rho_coupled = spectral_radius(T)
    mono = monolithicity_check(T, dec.X)
    kind = top.prec.kind
    rho_blocks = []
    for lam in dec.lambdas:
        if two_grid:
            Ti = build_characteristic_two_grid(levels, cfg, lam, kind)
        else:
            Ti = characteristic_cycle_matrix(_characteristic_levels(levels, lam, top.sys.dt, kind), cfg)
        rho_blocks.append(spectral_radius(Ti))
    rho_blocks = np.array(rho_blocks)
    mx = float(rho_blocks.max())
    return SpectralReport(
        rho_coupled=rho_coupled,
        rho_blocks=rho_blocks,
        max_block_rho=mx,
        discrepancy=abs(rho_coupled - mx),
        max_offdiag=mono.max_offdiag,
    )


def pencil_block_error(levels_or_sys, dec=None) -> float:
    """Max relative mismatch between diagonal blocks of ``X^{-1} B X`` and the
    independently formed pencils ``M + lam_i dt K``."""
    sys = levels_or_sys
    dec = dec or eig_decompose(sys.tableau)
    B = materialize(sys).toarray()
    blocks = characteristic_transform(B, dec.X)
    scale = np.abs(B).max()
    err = 0.0
    for i, lam in enumerate(dec.lambdas):
        ref = characteristic_pencil(sys.M, sys.K, lam, sys.dt).dense()
        err = max(err, float(np.abs(blocks[i, i] - ref).max()) / scale)
    return err


# sweep --------------------------------------------------------------------------

VERIFY_TABLEAUX = [("RadauIIA", 1), ("RadauIIA", 2), ("RadauIIA", 3), ("GaussLegendre", 1), ("GaussLegendre", 2)]
VERIFY_SMOOTHERS = [PrecKind.BLOCK_JACOBI, PrecKind.ASM]
VERIFY_CYCLES = ["two-grid", "v3"]
VERIFY_DEGREES = [1, 2]

VERIFY_COLUMNS = ["case", "s", "family", "smoother", "cycle", "rho_coupled", "max_block_rho", "discrepancy", "max_offdiag"]


@dataclass
class VerifyRow:
    case: str
    s: int
    family: str
    smoother: str
    cycle: str
    degree: int
    rho_coupled: float
    max_block_rho: float
    discrepancy: float
    max_offdiag: float
    passed: bool
    note: str = ""


def verify_case(
    family,
    s,
    smoother,
    cycle_kind,
    degree,
    base_n=2,
    dt=0.25,
    cfg: MgConfig | None = None,
    tol=1e-8,
    mono_tol=1e-9,
) -> VerifyRow:
    cfg = cfg or MgConfig(nu_pre=2, nu_post=2, gamma=1, omega=2.0 / 3.0)
    smoother = PrecKind(smoother)
    tab = make_tableau(family, s)
    nlev = 2 if cycle_kind == "two-grid" else 3
    levels = build_hierarchy(base_n, nlev, degree, tab, dt, smoother)
    case = f"{tab.name}-P{degree}-{smoother.value}-{cycle_kind}"
    dec = eig_decompose(tab)
    if smoother is PrecKind.POINT_JACOBI:
        T = coupled_cycle_matrix(levels, cfg, two_grid=cycle_kind == "two-grid")
        mono = monolithicity_check(T, dec.X, tol=mono_tol)
        rho = spectral_radius(T)
        ok = mono.is_monolithic
        return VerifyRow(case, s, tab.family.value, smoother.value, cycle_kind, degree, rho, np.nan, np.nan,
                         mono.max_offdiag, ok, "" if ok else "coupled iteration is not monolithic")
    rep = verify_spectral_theorem(levels, cfg, two_grid=cycle_kind == "two-grid")
    notes = []
    if rep.discrepancy > tol:
        notes.append(f"discrepancy {rep.discrepancy:.3e} > {tol:g}")
    if rep.max_offdiag > mono_tol:
        notes.append(f"off-diagonal blocks {rep.max_offdiag:.3e} > {mono_tol:g}")
    if not rep.rho_coupled < 1:
        notes.append(f"rho {rep.rho_coupled:.6f} >= 1")
    return VerifyRow(case, s, tab.family.value, smoother.value, cycle_kind, degree, rep.rho_coupled,
                     rep.max_block_rho, rep.discrepancy, rep.max_offdiag, not notes, "; ".join(notes))


def verify_sweep(
    tableaux=VERIFY_TABLEAUX,
    smoothers=VERIFY_SMOOTHERS,
    cycles=VERIFY_CYCLES,
    degrees=VERIFY_DEGREES,
    **kw,
) -> list[VerifyRow]:
    rows = []
    for family, s in tableaux:
        for sm in smoothers:
            for cyc in cycles:
                for deg in degrees:
                    rows.append(verify_case(family, s, sm, cyc, deg, **kw))
    return rows


def verify_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(VERIFY_COLUMNS)
    for r in rows:
        w.writerow([r.case, r.s, r.family, r.smoother, r.cycle, f"{r.rho_coupled:.17g}", f"{r.max_block_rho:.17g}",
                    f"{r.discrepancy:.17g}", f"{r.max_offdiag:.17g}"])
    return buf.getvalue()
