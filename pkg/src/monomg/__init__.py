"""Monolithic multigrid for stage-coupled implicit Runge-Kutta systems."""

from .tableau import (
    ButcherTableau,
    SpectralDecomposition,
    eig_decompose,
    make_gauss_legendre,
    make_radau_iia,
)
from .stage_system import StageSystem, characteristic_pencil
from .multigrid import MgConfig, build_hierarchy, cycle, mg_preconditioned_gmres

__all__ = [
    "ButcherTableau",
    "SpectralDecomposition",
    "eig_decompose",
    "make_gauss_legendre",
    "make_radau_iia",
    "StageSystem",
    "characteristic_pencil",
    "MgConfig",
    "build_hierarchy",
    "cycle",
    "mg_preconditioned_gmres",
]

__version__ = "0.1.0"
