"""Heat equation ``u_t - Laplace(u) = f`` on the unit square with a
manufactured solution ``u = sin(pi x) sin(pi y) exp(-t)``."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .fem import l2_norm
from .multigrid import MgConfig, build_hierarchy, mg_preconditioned_gmres
from .smoothers import PrecKind
from .stage_system import ForcingSpec, rk_update, step_rhs
from .tableau import ButcherTableau


def exact_solution(x, y, t):
    return np.sin(np.pi * x) * np.sin(np.pi * y) * np.exp(-t)


def forcing(x, y, t):
    # u_t = -u, -Laplace(u) = 2 pi^2 u
    return (2 * np.pi**2 - 1) * exact_solution(x, y, t)


def mesh_size(base_n: int, levels: int) -> float:
    return 1.0 / (base_n * 2 ** (levels - 1))


@dataclass
class SolveResult:
    s: int
    degree: int
    levels: int
    dofs: int
    iterations: int
    final_residual: float
    converged: bool
    solve_seconds: float


def solve_heat_step(
    tableau: ButcherTableau,
    degree: int,
    base_n: int,
    levels: int,
    dt: float,
    smoother=PrecKind.ASM,
    cfg: MgConfig | None = None,
    tol: float = 1e-8,
    max_iter: int = 200,
):
    """Solve the stage system of one step from the interpolated ``u(., 0)``."""
    cfg = cfg or MgConfig()
    hier = build_hierarchy(base_n, levels, degree, tableau, dt, smoother)
    top = hier[-1]
    u0 = top.space.interpolate(lambda x, y: exact_solution(x, y, 0.0))
    rhs = step_rhs(top.sys, ForcingSpec(forcing, top.space), 0.0, u0)
    t0 = time.perf_counter()
    k, stats = mg_preconditioned_gmres(hier, cfg, rhs, tol=tol, max_iter=max_iter)
    elapsed = time.perf_counter() - t0
    res = SolveResult(
        s=tableau.s,
        degree=degree,
        levels=levels,
        dofs=top.sys.shape[0],
        iterations=stats.iterations,
        final_residual=stats.true_residual,
        converged=stats.converged,
        solve_seconds=elapsed,
    )
    return res, k, hier


def step_heat(
    tableau: ButcherTableau,
    degree: int,
    base_n: int,
    levels: int,
    dt: float,
    steps: int,
    smoother=PrecKind.ASM,
    cfg: MgConfig | None = None,
    tol: float = 1e-10,
    forced: bool = True,
    u0=None,
):
    """Run ``steps`` RK steps; returns ``(u, l2_error, all_converged)``."""
    cfg = cfg or MgConfig()
    hier = build_hierarchy(base_n, levels, degree, tableau, dt, smoother)
    top = hier[-1]
    space = top.space
    if u0 is None:
        u = space.interpolate(lambda x, y: exact_solution(x, y, 0.0))
    else:
        u = np.array(u0, dtype=float)
    fs = ForcingSpec(forcing, space) if forced else None
    ok = True
    t = 0.0
    for _ in range(steps):
        rhs = step_rhs(top.sys, fs, t, u)
        k, stats = mg_preconditioned_gmres(hier, cfg, rhs, tol=tol)
        ok &= stats.converged
        u = rk_update(u, k, tableau, dt)
        t += dt
    err = l2_norm(space, u, lambda x, y: exact_solution(x, y, t))
    return u, err, ok
