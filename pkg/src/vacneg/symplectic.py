"""Williamson normal form and the local two-body bases S_W and S_N.

Transforms act on covariance matrices in the riffled ordering of
:mod:`vacneg.gaussian`; the patch-pair CM lists the d modes of A first and
then the d modes of B.  Complex vectors are carried as (real, imag) pairs of
mpfr arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .gaussian import CovarianceMatrix, GHPair, cm_from_GH, partial_transpose, symplectic_form, two_mode_log_negativity
from .patches import PatchPair
from .precision import (
    HPMatrix,
    NumericError,
    PrecisionContext,
    cholesky,
    hp_inverse,
    lower_inverse,
    max_abs,
    sym_eigen,
    symmetrize,
    zeros,
)


class DegeneracyError(NumericError):
    def __init__(self, message: str, gap=None):
        super().__init__(message)
        self.gap = gap


@dataclass
class SymplecticTransform:
    n_modes: int
    S: HPMatrix
    pairing: list = field(default_factory=list)

    def apply(self, cm: CovarianceMatrix) -> CovarianceMatrix:
        return CovarianceMatrix(self.S @ cm.data @ self.S.T)

    def symplectic_defect(self, ctx: PrecisionContext):
        """max |S Omega S^T - Omega|."""
        om = symplectic_form(self.n_modes, ctx)
        with ctx.local():
            return max_abs(self.S @ om @ self.S.T - om)


@dataclass
class WilliamsonResult:
    S: SymplecticTransform
    d_values: list

    def normal_form(self, ctx: PrecisionContext) -> HPMatrix:
        n = len(self.d_values)
        D = zeros(2 * n, 2 * n, ctx)
        for j, d in enumerate(self.d_values):
            D[2 * j, 2 * j] = d
            D[2 * j + 1, 2 * j + 1] = d
        return D


@dataclass
class PairDecomposition:
    pairs: list
    residual: HPMatrix | None = None


def _as_cm(state) -> CovarianceMatrix:
    if isinstance(state, GHPair):
        return cm_from_GH(state)
    if isinstance(state, CovarianceMatrix):
        return state
    return CovarianceMatrix(np.asarray(state, dtype=object))


def _cdot(ar, ai, br, bi):
    """Hermitian inner product <a, b> = a^dagger b as (re, im)."""
    return ar @ br + ai @ bi, ar @ bi - ai @ br


def williamson(cm: CovarianceMatrix, ctx: PrecisionContext) -> WilliamsonResult:
    """Symplectic S with S sigma S^T = diag(d_1, d_1, ..., d_n, d_n), d ascending.

    With sigma = C C^T and A = C^T Omega C (real antisymmetric), every unit
    eigenvector e of A^T A with eigenvalue d^2 gives w = e - i A e / d with
    A w = i d w, and u = C^-T w satisfies Omega sigma u = i d u.  Conjugate
    duplicates and degenerate subspaces are resolved by complex Gram-Schmidt
    on the w's, which is the same as symplectic orthogonality of the u's.
    Each u is phase-fixed (first significant phi component real positive)
    and scaled so that x^T Omega p = 1 for u = x + i p; (x, p) are then the
    rows of S for that mode.
    """
    cm = _as_cm(cm)
    n = cm.n_modes
    sigma = symmetrize(cm.data, ctx)
    C = cholesky(sigma, ctx)
    om = symplectic_form(n, ctx)
    with ctx.local():
        A = C.T @ om @ C
        AtA = symmetrize(A.T @ A, ctx)
    values, E = sym_eigen(AtA, ctx)
    Cinv_T = lower_inverse(C, ctx).T
    tol = ctx.eig_tol
    accepted = []  # (d, wr, wi)
    with ctx.local():
        for idx in range(2 * n):
            d = gmpy2.sqrt(abs(values[idx]))
            e = E[:, idx]
            wr = e.copy()
            wi = -(A @ e) / d
            for _, qr, qi in accepted:
                cr, ci = _cdot(qr, qi, wr, wi)
                wr, wi = wr - (qr * cr - qi * ci), wi - (qr * ci + qi * cr)
            norm = gmpy2.sqrt(wr @ wr + wi @ wi)
            if norm > mpfr(1) / 2:
                accepted.append((d, wr / norm, wi / norm))
            if len(accepted) == n:
                break
    if len(accepted) != n:
        with ctx.local():
            gaps = [abs(values[i + 1] - values[i]) for i in range(2 * n - 1)]
        raise DegeneracyError(f"found {len(accepted)} of {n} symplectic modes", gap=min(gaps) if gaps else None)

    S = zeros(2 * n, 2 * n, ctx)
    d_values = []
    with ctx.local():
        for j, (d, wr, wi) in enumerate(accepted):
            ur, ui = Cinv_T @ wr, Cinv_T @ wi
            pivot = None
            scale = max(max_abs(ur), max_abs(ui))
            for k in range(n):
                mag = gmpy2.sqrt(ur[2 * k] ** 2 + ui[2 * k] ** 2)
                if mag > tol * scale:
                    pivot = (ur[2 * k] / mag, ui[2 * k] / mag)
                    break
            if pivot is not None:
                # multiply by the conjugate unit phase
                cr, ci = pivot
                ur, ui = ur * cr + ui * ci, ui * cr - ur * ci
            xp = ur @ om @ ui
            if xp <= 0:
                raise NumericError("Williamson mode with non-positive symplectic norm")
            s = gmpy2.sqrt(xp)
            S[2 * j, :] = ur / s
            S[2 * j + 1, :] = ui / s
            d_values.append(d)
        # refine the eigenvalues from the transformed CM
        D = S @ sigma @ S.T
        d_values = [(D[2 * j, 2 * j] + D[2 * j + 1, 2 * j + 1]) / 2 for j in range(n)]
    order = sorted(range(n), key=lambda j: d_values[j])
    rows = [r for j in order for r in (2 * j, 2 * j + 1)]
    return WilliamsonResult(SymplecticTransform(n, S[rows, :]), [d_values[j] for j in order])


def williamson_residuals(cm: CovarianceMatrix, result: WilliamsonResult, ctx: PrecisionContext):
    """(max |S sigma S^T - D|, max |S^-1 D S^-T - sigma|, max |S Omega S^T - Omega|)."""
    cm = _as_cm(cm)
    S = result.S.S
    D = result.normal_form(ctx)
    with ctx.local():
        diag_res = max_abs(S @ cm.data @ S.T - D)
        Sinv = hp_inverse(S, ctx)
        rec_res = max_abs(Sinv @ D @ Sinv.T - cm.data)
    return diag_res, rec_res, result.S.symplectic_defect(ctx)


def _block_sum(SA: HPMatrix, SB: HPMatrix, ctx) -> HPMatrix:
    na, nb = SA.shape[0], SB.shape[0]
    S = zeros(na + nb, na + nb, ctx)
    S[:na, :na] = SA
    S[na:, na:] = SB
    return S


def local_spectra(gh_pure, pair: PatchPair, ctx: PrecisionContext):
    """Local symplectic spectra (ascending) of the A and B blocks."""
    cm = _as_cm(gh_pure)
    wa = williamson(cm.submatrix(pair.A_modes), ctx)
    wb = williamson(cm.submatrix(pair.B_modes), ctx)
    return wa, wb


def local_williamson(gh_pure, pair: PatchPair, ctx: PrecisionContext) -> SymplecticTransform:
    """S_W = S_W^(A) + S_W^(B), pairing the j-th smallest local modes."""
    wa, wb = local_spectra(gh_pure, pair, ctx)
    d = pair.d
    tol = ctx.eig_tol
    # an ambiguous pairing only matters for modes that carry entanglement
    with ctx.local():
        for k in range(d - 1):
            for dv in (wa.d_values, wb.d_values):
                lo, hi = dv[k], dv[k + 1]
                if hi - 1 > tol and hi - lo < tol * hi:
                    raise DegeneracyError(f"degenerate local symplectic eigenvalue {float(hi):.6g}", gap=hi - lo)
    S = _block_sum(wa.S.S, wb.S.S, ctx)
    return SymplecticTransform(2 * d, S, [(j, d + j) for j in range(d)])


def negativity_basis(gh_traced: GHPair, pair: PatchPair, ctx: PrecisionContext) -> SymplecticTransform:
    """Local basis S_N built from the contributing PT normal modes.

    Williamson of the partially transposed CM diag(2G, 2H^Gamma): with
    2G = L L^T and L^T (2 H^Gamma) L = W diag(nu^2) W^T, the k-th PT normal
    mode has phi coefficients a_k = nu_k^(1/2) L^-T w_k and pi coefficients
    c_k = nu_k^(-1/2) L w_k.  For each mode with nu_k < 1 the A and B
    restrictions of (a_k, c_k) become one local mode on each side,
    orthonormalised under the symplectic form against earlier local modes.
    The remaining local phi rows span the complement of the chosen pi rows
    and the local pi rows follow as X^-T, so each side stays symplectic and
    of phi/pi block form (which commutes with the partial transpose).
    """
    d = pair.d
    ghg = partial_transpose(gh_traced, pair.B_modes)
    with ctx.local():
        L = cholesky(2 * ghg.G, ctx)
        M = symmetrize(L.T @ (2 * ghg.H) @ L, ctx)
    lam, W = sym_eigen(M, ctx)
    contributing = [k for k, v in enumerate(lam) if v < 1]
    if not contributing:
        raise ValueError("traced state has no contributing PT eigenvalue (separable patches)")
    tol = ctx.eig_tol
    with ctx.local():
        for k in contributing[1:]:
            gap = lam[k] - lam[k - 1]
            if gap < tol * lam[k]:
                raise DegeneracyError(f"degenerate contributing PT eigenvalue {float(lam[k]):.6g}", gap=gap)
    LinvT = lower_inverse(L, ctx).T
    sides = []
    with ctx.local():
        for sites in (pair.A_modes, pair.B_modes):
            xs, ps = [], []
            for k in contributing:
                q = gmpy2.root(lam[k], 4)
                a = (q * (LinvT @ W[:, k]))[sites]
                c = ((L @ W[:, k]) / q)[sites]
                for xk, pk in zip(xs, ps):
                    a = a - (a @ pk) * xk
                    c = c - (xk @ c) * pk
                norm = a @ c
                if norm <= tol:
                    raise NumericError("local restriction of a PT normal mode has no symplectic weight")
                s = gmpy2.sqrt(norm)
                xs.append(a / s)
                ps.append(c / s)
            sides.append(_complete_local(xs, ps, d, ctx))
    S = _block_sum(sides[0], sides[1], ctx)
    return SymplecticTransform(2 * d, S, [(j, d + j) for j in range(len(contributing))])


def _complete_local(xs, ps, d: int, ctx) -> HPMatrix:
    """Riffled local symplectic matrix whose first modes are (xs, ps)."""
    n = len(xs)
    rows = list(xs)
    if n < d:
        # orthonormal basis of span{p}^perp via Jacobi on I - P P^+
        Pm = np.vstack(ps).astype(object).T  # d x n
        gram = Pm.T @ Pm
        proj = Pm @ hp_inverse(gram, ctx) @ Pm.T
        comp = -proj
        for i in range(d):
            comp[i, i] += 1
        vals, V = sym_eigen(symmetrize(comp, ctx), ctx)
        rows += [V[:, i] for i in range(n, d)]
    X = np.vstack(rows).astype(object)
    P = hp_inverse(X, ctx).T
    out = zeros(2 * d, 2 * d, ctx)
    for j in range(d):
        for i in range(d):
            out[2 * j, 2 * i] = X[j, i]
            out[2 * j + 1, 2 * i + 1] = P[j, i]
    return out


def pair_decomposition(state, transform: SymplecticTransform, pairing: Sequence | None,
                       ctx: PrecisionContext) -> PairDecomposition:
    """Two-mode sub-CMs of the transformed state for each (A, B) pair.

    Cross-pair correlations stay in the transformed CM and are ignored here;
    modes outside every pair form the residual block.
    """
    cm = _as_cm(state)
    pairing = transform.pairing if pairing is None else list(pairing)
    with ctx.local():
        out = transform.S @ cm.data @ transform.S.T
    pairs = []
    used = set()
    for a, b in pairing:
        idx = [2 * a, 2 * a + 1, 2 * b, 2 * b + 1]
        pairs.append((a, b, out[np.ix_(idx, idx)]))
        used.update((a, b))
    rest = [k for k in range(cm.n_modes) if k not in used]
    ridx = [2 * k + s for k in rest for s in (0, 1)]
    residual = out[np.ix_(ridx, ridx)] if ridx else None
    return PairDecomposition(pairs, residual)


def two_body_negativity_sum(state, transform: SymplecticTransform, pairing: Sequence | None,
                            ctx: PrecisionContext):
    """Sum of two-mode log-negativities over the paired modes."""
    dec = pair_decomposition(state, transform, pairing, ctx)
    total = mpfr(0, ctx.bits)
    with ctx.local():
        for _, _, block in dec.pairs:
            total += two_mode_log_negativity(block, ctx)
    return total
