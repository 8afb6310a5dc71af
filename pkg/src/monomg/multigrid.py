"""Monolithic two-grid and V/W-cycle multigrid for stage-coupled systems.

Levels are ordered coarse to fine: ``levels[0]`` is the coarsest mesh and
``levels[-1]`` the one the problem is posed on. Stage transfers apply the
spatial prolongation ``P`` to every stage (``I (x) P``); restriction is
``I (x) P^T``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import AssembledForms, FunctionSpace, apply_dirichlet, assemble, prolongation, refine, unit_square_mesh
from .linalg import DenseLU, GmresStats, SparseMatrix, gmres
from .smoothers import PrecKind, Preconditioner, make_preconditioner, smooth_apply
from .stage_system import (
    MATERIALIZE_CAP,
    StageSystem,
    apply_stage_operator,
    materialize,
    stage_prolong,
    stage_restrict,
)
from .tableau import ButcherTableau


@dataclass
class MgConfig:
    nu_pre: int = 2
    nu_post: int = 2
    gamma: int = 1
    omega: float = 2.0 / 3.0

    def __post_init__(self):
        if self.nu_pre < 0 or self.nu_post < 0 or self.nu_pre + self.nu_post < 1:
            raise ValueError(f"need nu_pre, nu_post >= 0 with at least one sweep, got {self.nu_pre}, {self.nu_post}")
        if self.gamma not in (1, 2):
            raise ValueError(f"gamma must be 1 (V-cycle) or 2 (W-cycle), got {self.gamma}")
        if not 0 < self.omega <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.omega}")


@dataclass(eq=False)
class MgLevel:
    space: FunctionSpace
    forms: AssembledForms
    sys: StageSystem
    prec: Preconditioner | None
    P: SparseMatrix | None = None  # prolongation to the next finer level
    _lu: DenseLU | None = field(default=None, repr=False)

    def coarse_solver(self) -> DenseLU:
        if self._lu is None:
            self._lu = DenseLU(materialize(self.sys).toarray())
        return self._lu

    def solve(self, b):
        return self.coarse_solver().solve(b)


def dt_from_kappa(kappa: float, h: float) -> float:
    return kappa * h


def build_hierarchy(
    coarse_n: int,
    levels: int,
    degree: int,
    tableau: ButcherTableau,
    dt: float,
    smoother_kind=PrecKind.BLOCK_JACOBI,
) -> list[MgLevel]:
    if levels < 1:
        raise ValueError(f"need at least one level, got {levels}")
    mesh = unit_square_mesh(coarse_n)
    hierarchy: list[MgLevel] = []
    for lev in range(levels):
        if lev:
            mesh = refine(mesh)
        space = FunctionSpace(mesh, degree)
        forms = apply_dirichlet(assemble(space))
        sys = StageSystem(forms.M, forms.K, tableau, dt)
        prec = make_preconditioner(smoother_kind, sys, space) if lev else None
        hierarchy.append(MgLevel(space, forms, sys, prec))
    for coarse, fine in zip(hierarchy[:-1], hierarchy[1:]):
        coarse.P = prolongation(coarse.space, fine.space)
    n0 = hierarchy[0].sys.shape[0]
    if n0 > MATERIALIZE_CAP:
        raise ValueError(f"coarsest stage operator has size {n0}, above the densification cap {MATERIALIZE_CAP}")
    hierarchy[0].coarse_solver()
    return hierarchy


def _smooth(level: MgLevel, cfg: MgConfig, x, b, nu):
    if nu == 0:
        return x
    if level.prec is None:
        level.prec = make_preconditioner(PrecKind.BLOCK_JACOBI, level.sys, level.space)
    return smooth_apply(level.prec, level.sys, x, b, nu, cfg.omega)


def two_grid_step(fine: MgLevel, coarse: MgLevel, cfg: MgConfig, x, b):
    """Pre-smooth, exact coarse correction, post-smooth.

    With ``coarse is fine`` the transfer is the identity.
    """
    s = fine.sys.s
    x = _smooth(fine, cfg, np.asarray(x), b, cfg.nu_pre)
    r = b - apply_stage_operator(fine.sys, x)
    if coarse is fine:
        x = x + coarse.solve(r)
    else:
        P = coarse.P
        if P is None or P.shape != (fine.sys.N, coarse.sys.N):
            raise ValueError("coarse level has no prolongation onto this fine level")
        ec = coarse.solve(stage_restrict(P, r, s))
        x = x + stage_prolong(P, ec, s)
    return _smooth(fine, cfg, x, b, cfg.nu_post)


def cycle(levels: list[MgLevel], cfg: MgConfig, level_index: int, x, b):
    """One multigrid cycle on ``levels[level_index]`` starting from ``x``."""
    if not 0 <= level_index < len(levels):
        raise IndexError(f"level index {level_index} out of range for {len(levels)} levels")
    level = levels[level_index]
    if level_index == 0:
        return level.solve(b)
    coarse = levels[level_index - 1]
    s = level.sys.s
    x = _smooth(level, cfg, np.asarray(x), b, cfg.nu_pre)
    r = b - apply_stage_operator(level.sys, x)
    rc = stage_restrict(coarse.P, r, s)
    ec = np.zeros_like(rc)
    for _ in range(cfg.gamma):
        ec = cycle(levels, cfg, level_index - 1, ec, rc)
    x = x + stage_prolong(coarse.P, ec, s)
    return _smooth(level, cfg, x, b, cfg.nu_post)


def cycle_preconditioner(levels: list[MgLevel], cfg: MgConfig):
    """One cycle from a zero guess, as a fixed linear map ``r -> B^{-1} r``."""
    top = len(levels) - 1

    def apply(r):
        r = np.asarray(r)
        return cycle(levels, cfg, top, np.zeros_like(r), r)

    return apply


def stationary_solve(levels, cfg: MgConfig, b, tol=1e-8, max_iter=200, x0=None):
    """Repeated cycles until the true relative residual is below ``tol``."""
    top = levels[-1]
    x = np.zeros_like(b) if x0 is None else np.array(x0, copy=True)
    bnorm = np.linalg.norm(b)
    history = []
    for it in range(max_iter + 1):
        res = np.linalg.norm(b - apply_stage_operator(top.sys, x)) / (bnorm if bnorm else 1.0)
        history.append(res)
        if res <= tol:
            return x, GmresStats(iterations=it, residual_history=history, converged=True, true_residual=res)
        if it == max_iter:
            break
        x = cycle(levels, cfg, len(levels) - 1, x, b)
    return x, GmresStats(iterations=max_iter, residual_history=history, converged=False, true_residual=history[-1])


def mg_preconditioned_gmres(levels, cfg: MgConfig, b, tol=1e-8, max_iter=200, restart=200):
    top = levels[-1]
    return gmres(
        lambda v: apply_stage_operator(top.sys, v),
        b,
        apply_prec=cycle_preconditioner(levels, cfg),
        tol=tol,
        max_iter=max_iter,
        restart=restart,
    )
