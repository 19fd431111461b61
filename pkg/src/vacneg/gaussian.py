"""Gaussian covariance-matrix core.

Covariance matrices use the mode-riffled ordering (phi_1, pi_1, ..., phi_n,
pi_n) with sigma_ij = <{q_i, q_j}>, so the vacuum of a unit oscillator is the
identity and Omega = direct sum of [[0, 1], [-1, 0]].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .precision import (
    HPMatrix,
    NumericError,
    PrecisionContext,
    cholesky,
    det,
    max_abs,
    native_context,
    nonsym_eigen_similar,
    sym_eigen,
    symmetrize,
    zeros,
)


class PrecisionLossError(NumericError):
    """A quantity that must be positive came out negative: raise the bits."""


@dataclass
class CovarianceMatrix:
    data: HPMatrix
    first_moments: np.ndarray | None = None

    def __post_init__(self):
        n2 = self.data.shape[0]
        if self.data.shape != (n2, n2) or n2 % 2:
            raise ValueError("a covariance matrix is 2n x 2n")

    @property
    def n_modes(self) -> int:
        return self.data.shape[0] // 2

    def submatrix(self, modes: Sequence[int]) -> "CovarianceMatrix":
        idx = [2 * k + s for k in modes for s in (0, 1)]
        return CovarianceMatrix(self.data[np.ix_(idx, idx)])


@dataclass
class GHPair:
    """<phi phi> and <pi pi> correlators of a state with vanishing <phi pi>."""

    G: HPMatrix
    H: HPMatrix

    def __post_init__(self):
        if self.G.shape != self.H.shape or self.G.shape[0] != self.G.shape[1]:
            raise ValueError(f"G and H must be square and equal-sized, got {self.G.shape} and {self.H.shape}")

    @property
    def n_modes(self) -> int:
        return self.G.shape[0]

    def restrict(self, modes: Sequence[int]) -> "GHPair":
        ix = np.ix_(list(modes), list(modes))
        return GHPair(self.G[ix], self.H[ix])


@dataclass
class PTSpectrum:
    values: list
    bipartition: tuple = field(default_factory=tuple)

    @property
    def minimum(self):
        return self.values[0]


@dataclass
class PhysicalityReport:
    uncertainty_ok: bool
    min_eigenvalue: mpfr
    purity: mpfr


def symplectic_form(n: int, ctx: PrecisionContext) -> HPMatrix:
    om = zeros(2 * n, 2 * n, ctx)
    for k in range(n):
        om[2 * k, 2 * k + 1] = mpfr(1, ctx.bits)
        om[2 * k + 1, 2 * k] = mpfr(-1, ctx.bits)
    return om


def cm_from_GH(gh: GHPair) -> CovarianceMatrix:
    n = gh.n_modes
    G, H = gh.G, gh.H
    bits = max(x.precision for x in G.flat) if n else 53
    data = np.empty((2 * n, 2 * n), dtype=object)
    zero = mpfr(0, bits)
    with gmpy2.context(precision=bits):
        for i in range(n):
            for j in range(n):
                data[2 * i, 2 * j] = 2 * G[i, j]
                data[2 * i + 1, 2 * j + 1] = 2 * H[i, j]
                data[2 * i, 2 * j + 1] = zero
                data[2 * i + 1, 2 * j] = zero
    return CovarianceMatrix(data, np.array([zero] * (2 * n), dtype=object))


def gh_from_cm(cm: CovarianceMatrix, ctx: PrecisionContext) -> GHPair:
    """Inverse of :func:`cm_from_GH`; refuses CMs with <phi pi> correlations."""
    d = cm.data
    cross = d[0::2, 1::2]
    if max_abs(cross) > ctx.eig_tol * max(max_abs(d), 1):
        raise ValueError("covariance matrix has <phi pi> correlations; no GH form")
    with ctx.local():
        return GHPair(d[0::2, 0::2] / 2, d[1::2, 1::2] / 2)


def partial_transpose(gh: GHPair, B_sites: Sequence[int]) -> GHPair:
    """Flip pi -> -pi on the modes in ``B_sites``."""
    B = set(B_sites)
    n = gh.n_modes
    H = gh.H.copy()
    with native_context(H):
        for i in range(n):
            for j in range(n):
                if (i in B) != (j in B):
                    H[i, j] = -H[i, j]
    return GHPair(gh.G, H)


def cm_partial_transpose(cm: CovarianceMatrix, B_modes: Sequence[int]) -> CovarianceMatrix:
    sign = np.ones(cm.data.shape[0], dtype=int)
    for k in B_modes:
        sign[2 * k + 1] = -1
    data = cm.data.copy()
    with native_context(data):
        for i in range(len(sign)):
            for j in range(len(sign)):
                if sign[i] * sign[j] < 0:
                    data[i, j] = -data[i, j]
    return CovarianceMatrix(data)


def pt_symplectic_spectrum(gh: GHPair, B_sites: Sequence[int], ctx: PrecisionContext,
                           return_vectors: bool = False):
    """nu^Gamma = 2 sqrt(spec(G H^Gamma)), ascending."""
    B = sorted(set(B_sites))
    A = [i for i in range(gh.n_modes) if i not in set(B)]
    ghg = partial_transpose(gh, B)
    values, V = nonsym_eigen_similar(ghg.G, ghg.H, ctx, vectors=return_vectors)
    with ctx.local():
        for lam in values:
            if lam <= 0:
                raise PrecisionLossError(
                    f"non-positive eigenvalue {float(lam):.3e} of G H^Gamma; increase precision"
                )
        nus = [2 * gmpy2.sqrt(lam) for lam in values]
    spec = PTSpectrum(nus, (tuple(A), tuple(B)))
    if return_vectors:
        return spec, V
    return spec


def log_negativity(spec: PTSpectrum):
    """-sum log2 min(nu, 1); exactly zero when every nu >= 1."""
    total = None
    with native_context(spec.values):
        for nu in spec.values:
            if nu < 1:
                term = -gmpy2.log2(nu)
                total = term if total is None else total + term
        if total is None:
            return mpfr(0)
        return total


def symplectic_eigenvalues(cm: CovarianceMatrix, ctx: PrecisionContext) -> list:
    """Symplectic spectrum of a positive-definite CM, ascending.

    With sigma = C C^T the matrix A = C^T Omega C is antisymmetric and shares
    its spectrum (+-i d_j) with Omega sigma, so d_j^2 are the (doubled)
    eigenvalues of A^T A.
    """
    n = cm.n_modes
    C = cholesky(symmetrize(cm.data, ctx), ctx)
    om = symplectic_form(n, ctx)
    with ctx.local():
        A = C.T @ om @ C
        AtA = symmetrize(A.T @ A, ctx)
    values, _ = sym_eigen(AtA, ctx, vectors=False)
    with ctx.local():
        roots = [gmpy2.sqrt(abs(v)) for v in values]
        # eigenvalues come in equal pairs; average each pair
        return [(roots[2 * k] + roots[2 * k + 1]) / 2 for k in range(n)]


def cm_log_negativity(cm: CovarianceMatrix, B_modes: Sequence[int], ctx: PrecisionContext):
    """Log negativity of a general (possibly phi-pi correlated) CM."""
    nus = symplectic_eigenvalues(cm_partial_transpose(cm, B_modes), ctx)
    with ctx.local():
        return log_negativity(PTSpectrum(nus))


def two_mode_log_negativity(sigma4: HPMatrix, ctx: PrecisionContext):
    """Closed-form two-mode log negativity (mode 1 | mode 2).

    Uses the local-unitary invariants: with sigma = [[a, c], [c^T, b]],
    Delta~ = det a + det b - 2 det c and
    2 nu_-^2 = Delta~ - sqrt(Delta~^2 - 4 det sigma).
    """
    s = sigma4
    with ctx.local():
        det2 = lambda m: m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        a = s[0:2, 0:2]
        b = s[2:4, 2:4]
        c = s[0:2, 2:4]
        delta = det2(a) + det2(b) - 2 * det2(c)
        disc = delta * delta - 4 * det(s, ctx)
        if disc < 0:
            disc = mpfr(0)
        nu2 = (delta - gmpy2.sqrt(disc)) / 2
        if nu2 <= 0:
            raise PrecisionLossError("non-positive PT symplectic eigenvalue in two-mode formula")
        nu = gmpy2.sqrt(nu2)
        return -gmpy2.log2(nu) if nu < 1 else mpfr(0)


def check_physical(cm: CovarianceMatrix, ctx: PrecisionContext) -> PhysicalityReport:
    """Minimum eigenvalue of sigma + i Omega and purity 1/sqrt(det sigma)."""
    n2 = cm.data.shape[0]
    om = symplectic_form(n2 // 2, ctx)
    # real embedding of the Hermitian matrix sigma + i Omega
    emb = np.empty((2 * n2, 2 * n2), dtype=object)
    emb[:n2, :n2] = cm.data
    emb[n2:, n2:] = cm.data
    emb[:n2, n2:] = -om
    emb[n2:, :n2] = om
    values, _ = sym_eigen(symmetrize(emb, ctx), ctx, vectors=False)
    with ctx.local():
        d = det(cm.data, ctx)
        purity = 1 / gmpy2.sqrt(d) if d > 0 else mpfr("inf")
        lo = values[0]
        return PhysicalityReport(bool(lo >= -ctx.eig_tol), lo, purity)
