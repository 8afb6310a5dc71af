import numpy as np
import pytest

from monomg.fem import FunctionSpace, apply_dirichlet, assemble, unit_square_mesh
from monomg.stage_system import StageSystem
from monomg.tableau import make_tableau

SQ3 = np.sqrt(3.0)

# hand-derived tableaux, kept here only to cross-check the generator
REFERENCE_TABLEAUX = {
    ("RadauIIA", 1): (np.array([[1.0]]), np.array([1.0]), np.array([1.0])),
    ("RadauIIA", 2): (
        np.array([[5 / 12, -1 / 12], [3 / 4, 1 / 4]]),
        np.array([3 / 4, 1 / 4]),
        np.array([1 / 3, 1.0]),
    ),
    ("RadauIIA", 3): (
        np.array(
            [
                [(88 - 7 * np.sqrt(6)) / 360, (296 - 169 * np.sqrt(6)) / 1800, (-2 + 3 * np.sqrt(6)) / 225],
                [(296 + 169 * np.sqrt(6)) / 1800, (88 + 7 * np.sqrt(6)) / 360, (-2 - 3 * np.sqrt(6)) / 225],
                [(16 - np.sqrt(6)) / 36, (16 + np.sqrt(6)) / 36, 1 / 9],
            ]
        ),
        np.array([(16 - np.sqrt(6)) / 36, (16 + np.sqrt(6)) / 36, 1 / 9]),
        np.array([(4 - np.sqrt(6)) / 10, (4 + np.sqrt(6)) / 10, 1.0]),
    ),
    ("GaussLegendre", 1): (np.array([[0.5]]), np.array([1.0]), np.array([0.5])),
    ("GaussLegendre", 2): (
        np.array([[1 / 4, 1 / 4 - SQ3 / 6], [1 / 4 + SQ3 / 6, 1 / 4]]),
        np.array([0.5, 0.5]),
        np.array([0.5 - SQ3 / 6, 0.5 + SQ3 / 6]),
    ),
    ("GaussLegendre", 3): (
        np.array(
            [
                [5 / 36, 2 / 9 - np.sqrt(15) / 15, 5 / 36 - np.sqrt(15) / 30],
                [5 / 36 + np.sqrt(15) / 24, 2 / 9, 5 / 36 - np.sqrt(15) / 24],
                [5 / 36 + np.sqrt(15) / 30, 2 / 9 + np.sqrt(15) / 15, 5 / 36],
            ]
        ),
        np.array([5 / 18, 4 / 9, 5 / 18]),
        np.array([0.5 - np.sqrt(15) / 10, 0.5, 0.5 + np.sqrt(15) / 10]),
    ),
}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def heat_system(n, degree, family="RadauIIA", s=2, dt=0.25):
    space = FunctionSpace(unit_square_mesh(n), degree)
    forms = apply_dirichlet(assemble(space))
    return StageSystem(forms.M, forms.K, make_tableau(family, s), dt), space
