"""Collocation Butcher tableaux (RadauIIA, Gauss-Legendre) and their
eigen-decomposition ``A = X diag(lam) X^{-1}``."""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .linalg import DenseLU, dense_eigenvalues

MAX_STAGES = 6


class Family(str, enum.Enum):
    RADAU_IIA = "RadauIIA"
    GAUSS_LEGENDRE = "GaussLegendre"
    CUSTOM = "Custom"


@dataclass(frozen=True)
class ButcherTableau:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    family: Family = Family.CUSTOM

    @property
    def s(self) -> int:
        return len(self.b)

    @property
    def name(self) -> str:
        return f"{self.family.value}({self.s})"


@dataclass(frozen=True)
class SpectralDecomposition:
    lambdas: np.ndarray
    X: np.ndarray
    Xinv: np.ndarray
    cond2: float


def _check_stages(s):
    if not isinstance(s, (int, np.integer)) or not 1 <= s <= MAX_STAGES:
        raise ValueError(f"stage count must be an integer in [1, {MAX_STAGES}], got {s!r}")


def _polished_roots(coeffs, newton_steps=3):
    # companion-matrix roots, then Newton on the monomial polynomial
    roots = np.sort(npoly.polyroots(coeffs).real)
    dcoeffs = npoly.polyder(coeffs)
    for _ in range(newton_steps):
        roots = roots - npoly.polyval(roots, coeffs) / npoly.polyval(roots, dcoeffs)
    return roots


def _shifted_legendre(s):
    # d^s/dt^s [t^s (t-1)^s], proportional to P_s(2t-1)
    base = npoly.polypow([0.0, 1.0], s)
    base = npoly.polymul(base, npoly.polypow([-1.0, 1.0], s))
    return npoly.polyder(base, s)


def _radau_right(s):
    # d^{s-1}/dt^{s-1} [t^{s-1} (t-1)^s]; roots are the right-Radau nodes incl. t=1
    base = npoly.polypow([0.0, 1.0], s - 1)
    base = npoly.polymul(base, npoly.polypow([-1.0, 1.0], s))
    return npoly.polyder(base, s - 1)


def collocation_matrix(c) -> np.ndarray:
    """``a_ij = int_0^{c_i} l_j(t) dt`` for the Lagrange basis on nodes ``c``."""
    c = np.asarray(c, dtype=float)
    s = len(c)
    if s == 0:
        raise ValueError("need at least one node")
    if len(np.unique(c)) != s:
        raise ValueError(f"collocation nodes must be distinct, got {c}")
    if np.any(c <= 0) or np.any(c > 1):
        raise ValueError(f"collocation nodes must lie in (0, 1], got {c}")
    A = np.empty((s, s))
    for j in range(s):
        others = np.delete(c, j)
        ell = npoly.polyfromroots(others) if s > 1 else np.array([1.0])
        ell = ell / np.prod(c[j] - others)
        antider = npoly.polyint(ell)
        A[:, j] = npoly.polyval(c, antider)
    return A


def _quadrature_weights(c):
    # b_j = int_0^1 l_j(t) dt
    c = np.asarray(c, dtype=float)
    s = len(c)
    b = np.empty(s)
    for j in range(s):
        others = np.delete(c, j)
        ell = npoly.polyfromroots(others) if s > 1 else np.array([1.0])
        ell = ell / np.prod(c[j] - others)
        b[j] = npoly.polyval(1.0, npoly.polyint(ell))
    return b


def make_radau_iia(s: int) -> ButcherTableau:
    _check_stages(s)
    if s == 1:
        c = np.array([1.0])
    else:
        c = _polished_roots(_radau_right(s))
        c[-1] = 1.0
    A = collocation_matrix(c)
    return ButcherTableau(A=A, b=A[-1].copy(), c=c, family=Family.RADAU_IIA)


def make_gauss_legendre(s: int) -> ButcherTableau:
    _check_stages(s)
    c = _polished_roots(_shifted_legendre(s))
    # enforce exact symmetry about 1/2
    c = 0.5 * (c + (1.0 - c[::-1]))
    A = collocation_matrix(c)
    return ButcherTableau(A=A, b=_quadrature_weights(c), c=c, family=Family.GAUSS_LEGENDRE)


def make_tableau(family, s: int) -> ButcherTableau:
    family = Family(family) if not isinstance(family, Family) else family
    if family is Family.RADAU_IIA:
        return make_radau_iia(s)
    if family is Family.GAUSS_LEGENDRE:
        return make_gauss_legendre(s)
    raise ValueError(f"no constructor for family {family.value}")


def custom_tableau(A, b, c) -> ButcherTableau:
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    c = np.array(c, dtype=float)
    s = len(b)
    if A.shape != (s, s) or c.shape != (s,):
        raise ValueError("inconsistent tableau dimensions")
    return ButcherTableau(A=A, b=b, c=c, family=Family.CUSTOM)


def _inverse_iteration(A, lam, steps=3):
    n = A.shape[0]
    scale = max(np.abs(A).max(), 1.0)
    shift = lam + 1e-9 * scale
    lu = DenseLU(A - shift * np.eye(n))
    v = np.ones(n, dtype=complex) / np.sqrt(n)
    for _ in range(steps):
        v = lu.solve(v)
        v = v / np.linalg.norm(v)
    # fix the phase: largest-magnitude entry (first on ties) real positive
    k = int(np.argmax(np.round(np.abs(v), 12)))
    v = v * (abs(v[k]) / v[k])
    return v


def sort_eigenvalues(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=complex)
    return lam[np.lexsort((lam.real, lam.imag))]


def eig_decompose(t: ButcherTableau) -> SpectralDecomposition:
    """Eigen-decomposition of the Butcher matrix with unit-norm eigenvectors.

    Eigenvalues are ordered by (Im, Re) ascending. Conjugate eigenvalues get
    conjugate eigenvectors, so real operators have conjugate characteristic
    blocks.
    """
    A = np.asarray(t.A, dtype=float)
    s = A.shape[0]
    lam = dense_eigenvalues(A)
    scale = max(np.abs(A).max(), 1.0)
    lam = np.where(np.abs(lam.imag) < 1e-14 * scale, lam.real + 0j, lam)
    lam = sort_eigenvalues(lam)
    gaps = np.abs(lam[:, None] - lam[None, :])
    np.fill_diagonal(gaps, np.inf)
    if s > 1 and gaps.min() < 1e-8 * scale:
        raise np.linalg.LinAlgError(
            f"Butcher matrix has (nearly) repeated eigenvalues {lam}; defective matrices are not supported"
        )

    X = np.empty((s, s), dtype=complex)
    for i, li in enumerate(lam):
        if li.imag < 0:
            X[:, i] = np.conj(_inverse_iteration(A, np.conj(li)))
            continue
        v = _inverse_iteration(A, li)
        if li.imag == 0:
            v = v.real + 0j
            v /= np.linalg.norm(v)
        X[:, i] = v
    lu = DenseLU(X)
    Xinv = lu.solve(np.eye(s, dtype=complex))
    gram = np.linalg.eigvalsh(X.conj().T @ X)
    if gram[0] <= 0:
        raise np.linalg.LinAlgError("eigenvector matrix is numerically singular")
    cond2 = float(np.sqrt(gram[-1] / gram[0]))
    return SpectralDecomposition(lambdas=lam, X=X, Xinv=Xinv, cond2=cond2)


def spectrum_report(family, s_range) -> list[tuple]:
    """Rows ``(family, s, re, im, cond2)``, one per eigenvalue."""
    rows = []
    for s in s_range:
        t = make_tableau(family, s)
        dec = eig_decompose(t)
        for lam in dec.lambdas:
            rows.append((t.family.value, s, float(lam.real), float(lam.imag), dec.cond2))
    return rows


def spectrum_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["family", "s", "re", "im", "cond2"])
    for fam, s, re, im, cond in rows:
        w.writerow([fam, s, f"{re:.17g}", f"{im:.17g}", f"{cond:.17g}"])
    return buf.getvalue()
