"""Extended-precision scalar and dense-matrix kernels.

Matrices are plain ``numpy`` object arrays whose entries are ``gmpy2.mpfr``
values.  Every routine takes a :class:`PrecisionContext` and evaluates inside
a local gmpy2 context at ``ctx.bits`` of significand, so callers never touch
the global gmpy2 state.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr

HPMatrix = np.ndarray

DEFAULT_BITS = 512
MAX_JACOBI_SWEEPS = 80


class NumericError(ArithmeticError):
    """Base class for precision-layer failures."""


class NonConvergenceError(NumericError):
    def __init__(self, message: str, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularMatrixError(NumericError):
    pass


class NotPositiveDefiniteError(NumericError):
    def __init__(self, message: str, eigenvalue=None):
        super().__init__(message)
        self.eigenvalue = eigenvalue


@dataclass(frozen=True)
class PrecisionContext:
    """Working precision in bits plus the tolerances derived from it."""

    bits: int = DEFAULT_BITS

    def __post_init__(self):
        if int(self.bits) != self.bits or self.bits < 128:
            raise ValueError(f"precision must be an integer >= 128 bits, got {self.bits}")

    @property
    def eig_tol(self) -> mpfr:
        return gmpy2.mul_2exp(mpfr(1, self.bits), -(self.bits // 2))

    @property
    def quad_tol(self) -> mpfr:
        return gmpy2.mul_2exp(mpfr(1, self.bits), -self.bits + 16)

    @property
    def pivot_tol(self) -> mpfr:
        return gmpy2.mul_2exp(mpfr(1, self.bits), -self.bits + 8)

    def local(self, extra_bits: int = 0):
        """Context manager activating this precision (plus optional guard bits)."""
        return gmpy2.context(precision=self.bits + extra_bits)

    def mpf(self, value) -> mpfr:
        """Convert ``value`` to an mpfr at working precision.

        Floats are routed through ``repr`` so that ``0.3`` means the decimal
        0.3 rather than its binary64 neighbour.
        """
        if isinstance(value, float):
            value = repr(float(value))
        return mpfr(value, self.bits)

    def with_bits(self, bits: int) -> "PrecisionContext":
        return PrecisionContext(bits)


def as_hp(rows, ctx: PrecisionContext, symmetric: bool = False) -> HPMatrix:
    """Build an HPMatrix from nested sequences (or an existing array)."""
    arr = np.asarray(rows, dtype=object)
    if arr.ndim != 2:
        raise ValueError("HPMatrix must be two-dimensional")
    out = np.empty(arr.shape, dtype=object)
    for idx, v in np.ndenumerate(arr):
        out[idx] = ctx.mpf(v)
    if symmetric:
        out = symmetrize(out, ctx)
    return out


def hp_vector(values: Iterable, ctx: PrecisionContext) -> np.ndarray:
    vals = list(values)
    out = np.empty(len(vals), dtype=object)
    for i, v in enumerate(vals):
        out[i] = ctx.mpf(v)
    return out


def zeros(n: int, m: int | None = None, ctx: PrecisionContext | None = None) -> HPMatrix:
    bits = ctx.bits if ctx else DEFAULT_BITS
    m = n if m is None else m
    out = np.empty((n, m), dtype=object)
    for idx in np.ndindex(n, m):
        out[idx] = mpfr(0, bits)
    return out


def identity(n: int, ctx: PrecisionContext | None = None) -> HPMatrix:
    out = zeros(n, n, ctx)
    bits = ctx.bits if ctx else DEFAULT_BITS
    for i in range(n):
        out[i, i] = mpfr(1, bits)
    return out


def symmetrize(a: HPMatrix, ctx: PrecisionContext) -> HPMatrix:
    """Return a copy with A_ij == A_ji exactly."""
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("only square matrices can be symmetrized")
    out = np.empty_like(a)
    with ctx.local():
        for i in range(n):
            out[i, i] = mpfr(a[i, i])
            for j in range(i + 1, n):
                v = (a[i, j] + a[j, i]) / 2
                out[i, j] = v
                out[j, i] = v
    return out


def matmul(a: HPMatrix, b: HPMatrix, ctx: PrecisionContext) -> HPMatrix:
    with ctx.local():
        return a @ b


def native_context(values):
    """gmpy2 context at the widest precision among ``values``.

    gmpy2 rounds every result (negation included) to the active context, so
    element-wise helpers that are not handed a PrecisionContext use this.
    """
    bits = max((x.precision for x in np.asarray(values, dtype=object).flat if isinstance(x, type(mpfr(0)))),
               default=53)
    return gmpy2.context(precision=bits)


def max_abs(a) -> mpfr:
    with native_context(a):
        return max((abs(x) for x in np.asarray(a).flat), default=mpfr(0))


def to_float(a) -> np.ndarray:
    """Double-precision copy, for plotting and double-precision oracles."""
    return np.vectorize(float, otypes=[float])(np.asarray(a, dtype=object))


def sym_eigen(a: HPMatrix, ctx: PrecisionContext, vectors: bool = True):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(eigenvalues, V)`` with eigenvalues ascending and the columns of
    ``V`` the matching orthonormal eigenvectors (``V`` is ``None`` when
    ``vectors`` is false).
    """
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("sym_eigen needs a square matrix")
    with ctx.local():
        A = [[mpfr(a[i, j]) for j in range(n)] for i in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                if A[i][j] != A[j][i]:
                    v = (A[i][j] + A[j][i]) / 2
                    A[i][j] = A[j][i] = v
        V = None
        if vectors:
            V = [[mpfr(1) if i == j else mpfr(0) for j in range(n)] for i in range(n)]
        eps = gmpy2.mul_2exp(mpfr(1), -ctx.bits + 4)
        fro = gmpy2.sqrt(sum(x * x for row in A for x in row))
        floor = eps * eps * fro

        converged = n < 2
        for _ in range(MAX_JACOBI_SWEEPS):
            if converged:
                break
            rotated = False
            for p in range(n - 1):
                Ap = A[p]
                for q in range(p + 1, n):
                    apq = Ap[q]
                    if apq == 0:
                        continue
                    app = Ap[p]
                    aqq = A[q][q]
                    scale = gmpy2.sqrt(abs(app * aqq))
                    if abs(apq) <= eps * scale or abs(apq) <= floor:
                        Ap[q] = A[q][p] = mpfr(0)
                        continue
                    rotated = True
                    theta = (aqq - app) / (2 * apq)
                    t = 1 / (abs(theta) + gmpy2.sqrt(theta * theta + 1))
                    if theta < 0:
                        t = -t
                    c = 1 / gmpy2.sqrt(t * t + 1)
                    s = t * c
                    Aq = A[q]
                    for k in range(n):
                        akp = Ap[k]
                        akq = Aq[k]
                        Ap[k] = c * akp - s * akq
                        Aq[k] = s * akp + c * akq
                    for row in A:
                        akp = row[p]
                        akq = row[q]
                        row[p] = c * akp - s * akq
                        row[q] = s * akp + c * akq
                    Ap[q] = Aq[p] = mpfr(0)
                    if V is not None:
                        Vp = V[p]
                        Vq = V[q]
                        for k in range(n):
                            vp = Vp[k]
                            vq = Vq[k]
                            Vp[k] = c * vp - s * vq
                            Vq[k] = s * vp + c * vq
            converged = not rotated
        if not converged:
            worst = max(abs(A[i][j]) for i in range(n) for j in range(n) if i != j)
            raise NonConvergenceError(
                f"Jacobi iteration did not converge in {MAX_JACOBI_SWEEPS} sweeps "
                f"(largest off-diagonal {float(worst):.3e})",
                residual=worst,
            )
        order = sorted(range(n), key=lambda i: A[i][i])
        values = [A[i][i] for i in order]
        if V is None:
            return values, None
        # V holds eigenvectors as rows; return them as columns.
        out = np.empty((n, n), dtype=object)
        for col, i in enumerate(order):
            for k in range(n):
                out[k, col] = V[i][k]
        return values, out


def cholesky(a: HPMatrix, ctx: PrecisionContext) -> HPMatrix:
    """Lower-triangular L with L L^T = A."""
    n = a.shape[0]
    with ctx.local():
        L = [[mpfr(0)] * n for _ in range(n)]
        for j in range(n):
            Lj = L[j]
            d = mpfr(a[j, j]) - sum((x * x for x in Lj[:j]), mpfr(0))
            if d <= 0:
                raise NotPositiveDefiniteError(
                    f"matrix is not positive definite (pivot {float(d):.3e} at row {j})",
                    eigenvalue=d,
                )
            ljj = gmpy2.sqrt(d)
            Lj[j] = ljj
            for i in range(j + 1, n):
                Li = L[i]
                s = mpfr(a[i, j]) - sum((Li[k] * Lj[k] for k in range(j)), mpfr(0))
                Li[j] = s / ljj
        return np.array(L, dtype=object)


def lower_inverse(L: HPMatrix, ctx: PrecisionContext) -> HPMatrix:
    """Inverse of a lower-triangular matrix by forward substitution."""
    n = L.shape[0]
    with ctx.local():
        X = [[mpfr(0)] * n for _ in range(n)]
        for j in range(n):
            X[j][j] = 1 / L[j, j]
            for i in range(j + 1, n):
                s = sum((L[i, k] * X[k][j] for k in range(j, i)), mpfr(0))
                X[i][j] = -s / L[i, i]
        return np.array(X, dtype=object)


def spd_inverse(a: HPMatrix, ctx: PrecisionContext) -> HPMatrix:
    """Inverse of a symmetric positive-definite matrix via Cholesky."""
    Li = lower_inverse(cholesky(a, ctx), ctx)
    with ctx.local():
        return symmetrize(Li.T @ Li, ctx)


def hp_inverse(a: HPMatrix, ctx: PrecisionContext) -> HPMatrix:
    """Gauss-Jordan inverse with partial pivoting."""
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("hp_inverse needs a square matrix")
    with ctx.local():
        M = [[mpfr(a[i, j]) for j in range(n)] + [mpfr(1) if i == j else mpfr(0) for j in range(n)]
             for i in range(n)]
        scale = max((abs(x) for row in M for x in row[:n]), default=mpfr(0))
        if scale == 0:
            raise SingularMatrixError("zero matrix is singular")
        tol = ctx.pivot_tol * scale
        for col in range(n):
            piv = max(range(col, n), key=lambda r: abs(M[r][col]))
            if abs(M[piv][col]) <= tol:
                raise SingularMatrixError(
                    f"pivot {float(abs(M[piv][col])):.3e} below 2^-{ctx.bits - 8} (relative) in column {col}"
                )
            M[col], M[piv] = M[piv], M[col]
            prow = M[col]
            inv = 1 / prow[col]
            for k in range(2 * n):
                prow[k] *= inv
            for r in range(n):
                if r == col:
                    continue
                f = M[r][col]
                if f == 0:
                    continue
                row = M[r]
                for k in range(col, 2 * n):
                    row[k] -= f * prow[k]
        return np.array([row[n:] for row in M], dtype=object)


def det(a: HPMatrix, ctx: PrecisionContext) -> mpfr:
    """Determinant by partial-pivot LU."""
    n = a.shape[0]
    with ctx.local():
        M = [[mpfr(a[i, j]) for j in range(n)] for i in range(n)]
        out = mpfr(1)
        for col in range(n):
            piv = max(range(col, n), key=lambda r: abs(M[r][col]))
            if M[piv][col] == 0:
                return mpfr(0)
            if piv != col:
                M[col], M[piv] = M[piv], M[col]
                out = -out
            p = M[col][col]
            out *= p
            for r in range(col + 1, n):
                f = M[r][col] / p
                if f == 0:
                    continue
                row = M[r]
                prow = M[col]
                for k in range(col + 1, n):
                    row[k] -= f * prow[k]
        return out


def sym_pd_sqrt(a: HPMatrix, ctx: PrecisionContext) -> HPMatrix:
    """Symmetric square root B (B @ B == A) of a positive-definite matrix."""
    values, V = sym_eigen(a, ctx)
    with ctx.local():
        for v in values:
            if v <= 0:
                raise NotPositiveDefiniteError(
                    f"sym_pd_sqrt needs a positive-definite matrix; found eigenvalue {float(v):.6e}",
                    eigenvalue=v,
                )
        roots = np.array([gmpy2.sqrt(v) for v in values], dtype=object)
        return symmetrize((V * roots) @ V.T, ctx)


def _fix_sign(v: np.ndarray, ctx: PrecisionContext, tol) -> np.ndarray:
    """Deterministic sign: nonnegative component sum, with fallbacks for
    vectors whose sum vanishes (odd under a mirror symmetry)."""
    total = sum(v, mpfr(0))
    if abs(total) > tol:
        return -v if total < 0 else v
    half = len(v) // 2
    left = sum(v[:half], mpfr(0)) if half else mpfr(0)
    if abs(left) > tol:
        return -v if left < 0 else v
    for x in v:
        if abs(x) > tol:
            return -v if x < 0 else v
    return v


def normalize_columns(V: HPMatrix, ctx: PrecisionContext) -> HPMatrix:
    """Unit Euclidean norm per column, sign fixed by :func:`_fix_sign`."""
    out = np.empty_like(V)
    with ctx.local():
        tol = gmpy2.mul_2exp(mpfr(1), -(ctx.bits // 4))
        for j in range(V.shape[1]):
            col = V[:, j]
            nrm = gmpy2.sqrt(sum((x * x for x in col), mpfr(0)))
            col = np.array([x / nrm for x in col], dtype=object)
            out[:, j] = _fix_sign(col, ctx, tol)
    return out


def nonsym_eigen_similar(G: HPMatrix, Hg: HPMatrix, ctx: PrecisionContext, vectors: bool = True):
    """Spectrum and right eigenvectors of the product ``G @ Hg``.

    ``G`` must be symmetric positive definite and ``Hg`` symmetric.  With
    ``G = L L^T`` the product is similar to the symmetric ``L^T Hg L``, so the
    spectrum is real and a symmetric solver suffices; right eigenvectors of
    the product are ``L w``.
    """
    L = cholesky(G, ctx)
    with ctx.local():
        M = symmetrize(L.T @ Hg @ L, ctx)
    values, W = sym_eigen(M, ctx, vectors=vectors)
    if not vectors:
        return values, None
    with ctx.local():
        V = L @ W
    return values, normalize_columns(V, ctx)


def reconstruction_residual(a: HPMatrix, values: Sequence, V: HPMatrix, ctx: PrecisionContext) -> mpfr:
    """max|V diag(values) V^T - A| / max|A|."""
    with ctx.local():
        R = (V * np.array(values, dtype=object)) @ V.T - a
        scale = max_abs(a)
        return max_abs(R) / scale if scale else max_abs(R)
