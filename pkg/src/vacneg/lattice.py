"""Correlation kernels K and K^-1 of the free lattice scalar vacuum.

For a periodic chain of N sites

    K_r      = (1/N) sum_k cos(2 pi k r / N) * sqrt(m^2 + khat^2)
    (K^-1)_r = (1/N) sum_k cos(2 pi k r / N) / sqrt(m^2 + khat^2)

with khat = 2 sin(pi k / N).  In infinite volume the sums become
Brillouin-zone integrals.  Writing z = 1 + m^2/2, the integral for K^-1 is a
toroidal (half-odd-degree Legendre) function,

    (K^-1)_r = (1/pi) int_0^pi cos(r k) / sqrt(2 (z - cos k)) dk,

whose r = 0, 1 values are complete elliptic integrals of modulus
k = 2 / sqrt(4 + m^2), and which obeys the three-term recurrence

    (r + 1/2) q_{r+1} = 2 r z q_r - (r - 1/2) q_{r-1}.

K then follows from K = (m^2 - Laplacian) K^-1.  The recurrence runs in the
direction where the wanted solution is recessive, so guard bits proportional
to r * acosh(z) are added before rounding back to working precision.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .precision import HPMatrix, PrecisionContext

MASSLESS = 1e-10
EULER_GAMMA = gmpy2.const_euler(256)


class KernelKind(enum.Enum):
    K = "K"
    Kinv = "Kinv"


@dataclass(frozen=True)
class FiniteN:
    N: int

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"finite lattice needs N >= 2 sites, got {self.N}")


@dataclass(frozen=True)
class Infinite:
    pass


INFINITE = Infinite()
Volume = Union[FiniteN, Infinite]


class UnsupportedVolumeError(ValueError):
    pass


@dataclass(frozen=True)
class LatticeSpec:
    """Mass (dimensionless, > 0) and lattice volume."""

    mass: Union[float, str]
    volume: Volume = INFINITE

    def __post_init__(self):
        if not float(self.mass) > 0:
            raise ValueError("mass must be strictly positive (use 1e-10 for the massless regime)")

    @property
    def is_infinite(self) -> bool:
        return isinstance(self.volume, Infinite)

    def mass_hp(self, ctx: PrecisionContext) -> mpfr:
        return ctx.mpf(self.mass)


@dataclass
class CorrelationKernel:
    """Lazily filled, precision-tagged cache of kernel matrix elements."""

    spec: LatticeSpec
    ctx: PrecisionContext = field(default_factory=PrecisionContext)
    _cache: dict = field(default_factory=dict, repr=False)

    def element(self, kind: KernelKind, r: int) -> mpfr:
        return kernel_element(self, kind, r, self.ctx)

    def warm(self, r_max: int) -> None:
        """Fill the cache up to separation ``r_max`` for both kinds."""
        if self.spec.is_infinite:
            _fill_infinite(self, r_max, self.ctx)
        else:
            for r in range(min(r_max, self.spec.volume.N // 2) + 1):
                for kind in KernelKind:
                    kernel_element(self, kind, r, self.ctx)


def kernel_element(kernel: CorrelationKernel, kind: KernelKind, r: int, ctx: PrecisionContext) -> mpfr:
    """K_r or (K^-1)_r at working precision; even in r."""
    kind = KernelKind(kind)
    vol = kernel.spec.volume
    r = abs(int(r))
    if isinstance(vol, FiniteN):
        r %= vol.N
        r = min(r, vol.N - r)
    key = (kind, r, ctx.bits)
    hit = kernel._cache.get(key)
    if hit is not None:
        return hit
    if isinstance(vol, FiniteN):
        value = _finite_element(kernel.spec.mass, vol.N, kind, r, ctx)
        kernel._cache[key] = value
        return value
    _fill_infinite(kernel, max(r, 2 * _cached_rmax(kernel, ctx), 16), ctx)
    return kernel._cache[key]


def _cached_rmax(kernel: CorrelationKernel, ctx: PrecisionContext) -> int:
    return kernel._cache.get(("rmax", ctx.bits), -1)


def _finite_element(mass, N: int, kind: KernelKind, r: int, ctx: PrecisionContext) -> mpfr:
    guard = 32
    with ctx.local(guard):
        m2 = ctx.mpf(mass) ** 2
        pi = gmpy2.const_pi()
        total = mpfr(0)
        for k in range(N):
            khat = 2 * gmpy2.sin(pi * k / N)
            w = gmpy2.sqrt(m2 + khat * khat)
            if kind is KernelKind.Kinv:
                w = 1 / w
            total += gmpy2.cos(2 * pi * k * r / N) * w
        total /= N
    return mpfr(total, ctx.bits)


def _toroidal_sequence(mass, r_max: int, ctx: PrecisionContext) -> list:
    """q_r = (K^-1)_r for r = 0 .. r_max + 1 in infinite volume."""
    m_f = float(mass)
    decay = 2.0 * math.asinh(m_f / 2.0)
    guard = 64 + int(math.ceil(2.0 * (r_max + 2) * decay / math.log(2.0)))
    with ctx.local(guard):
        m = ctx.mpf(mass)
        m2 = m * m
        z = 1 + m2 / 2
        root = gmpy2.sqrt(4 + m2)
        kprime = m / root  # complementary modulus, computed without cancellation
        kmod = 2 / root
        pi = gmpy2.const_pi()
        # complete elliptic integrals of modulus kmod via the AGM
        a, b, c = mpfr(1), kprime, kmod
        csum = c * c / 2
        power = mpfr(1)
        tol = gmpy2.mul_2exp(mpfr(1), -(ctx.bits + guard))
        while abs(c) > tol:
            a, b, c = (a + b) / 2, gmpy2.sqrt(a * b), (a - b) / 2
            power *= 2
            csum += power * c * c / 2
        ellip_k = pi / (2 * a)
        ellip_e = ellip_k * (1 - csum)
        q0 = kmod * ellip_k / pi
        k0 = 2 * root * ellip_e / pi
        q1 = ((m2 + 2) * q0 - k0) / 2
        qs = [q0, q1]
        half = mpfr(1) / 2
        for n in range(1, r_max + 1):
            qs.append((2 * n * z * qs[n] - (n - half) * qs[n - 1]) / (n + half))
        out_inv = [mpfr(q, ctx.bits) for q in qs[: r_max + 1]]
        out_k = []
        for n in range(r_max + 1):
            prev = qs[1] if n == 0 else qs[n - 1]
            out_k.append(mpfr((m2 + 2) * qs[n] - qs[n + 1] - prev, ctx.bits))
    return out_inv, out_k


def _fill_infinite(kernel: CorrelationKernel, r_max: int, ctx: PrecisionContext) -> None:
    if r_max <= _cached_rmax(kernel, ctx):
        return
    inv, kk = _toroidal_sequence(kernel.spec.mass, r_max, ctx)
    for r in range(r_max + 1):
        kernel._cache[(KernelKind.Kinv, r, ctx.bits)] = inv[r]
        kernel._cache[(KernelKind.K, r, ctx.bits)] = kk[r]
    kernel._cache[("rmax", ctx.bits)] = r_max


def assemble_K_block(kernel: CorrelationKernel, sites_row: Sequence[int], sites_col: Sequence[int],
                     kind: KernelKind, ctx: PrecisionContext) -> HPMatrix:
    """Matrix with entries kernel(kind, row_site - col_site)."""
    kind = KernelKind(kind)
    rows, cols = list(sites_row), list(sites_col)
    if kernel.spec.is_infinite and rows and cols:
        span = max(max(rows) - min(cols), max(cols) - min(rows))
        _fill_infinite(kernel, max(span, 0), ctx)
    out = np.empty((len(rows), len(cols)), dtype=object)
    for a, i in enumerate(rows):
        for b, j in enumerate(cols):
            out[a, b] = kernel_element(kernel, kind, i - j, ctx)
    return out


def vacuum_GH(kernel: CorrelationKernel, sites: Sequence[int] | None, ctx: PrecisionContext):
    """Pure full-lattice two-point functions G = K^-1 / 2 and H = K / 2."""
    vol = kernel.spec.volume
    if not isinstance(vol, FiniteN):
        raise UnsupportedVolumeError("the full-lattice covariance matrix is undefined in infinite volume")
    sites = list(range(vol.N)) if sites is None else list(sites)
    if sorted(s % vol.N for s in sites) != list(range(vol.N)):
        raise ValueError("vacuum_GH needs the sites of the whole lattice")
    Kinv = assemble_K_block(kernel, sites, sites, KernelKind.Kinv, ctx)
    K = assemble_K_block(kernel, sites, sites, KernelKind.K, ctx)
    with ctx.local():
        return Kinv / 2, K / 2


def hypergeometric_element(mass, kind: KernelKind, r: int, dps: int = 50):
    """Independent closed form through the regularized 3F2 at z = 4/(4+m^2).

    Only practical for moderate masses (the series converges like z^n).
    Returns an mpmath number.
    """
    import mpmath

    kind = KernelKind(kind)
    r = abs(int(r))
    with mpmath.workdps(dps):
        m = mpmath.mpf(str(mass))
        z = 4 / (4 + m ** 2)
        a1 = mpmath.mpf(-1) / 2 if kind is KernelKind.K else mpmath.mpf(1) / 2
        params = (a1, mpmath.mpf(1) / 2, mpmath.mpf(1))

        # 1/Gamma(1 - r + n) vanishes for n < r, so the regularized series
        # starts at n = r.
        def term(n):
            n = int(n)
            num = mpmath.rf(params[0], n) * mpmath.rf(params[1], n) * mpmath.rf(params[2], n)
            den = mpmath.gamma(1 - r + n) * mpmath.gamma(1 + r + n) * mpmath.factorial(n)
            return num / den * z ** n

        series = mpmath.nsum(term, [r, mpmath.inf])
        if kind is KernelKind.K:
            return mpmath.sqrt(4 + m ** 2) * series
        return series / mpmath.sqrt(4 + m ** 2)


def massive_envelope(mass: float, kind: KernelKind, r: float) -> float:
    """Leading large-r continuum asymptotics in the massive regime."""
    kind = KernelKind(kind)
    if kind is KernelKind.K:
        return -math.sqrt(mass / (2 * math.pi * r ** 3)) * math.exp(-mass * r)
    return math.exp(-mass * r) / math.sqrt(2 * math.pi * mass * r)


def massless_envelope(mass: float, kind: KernelKind, r: float) -> float:
    """Leading large-r asymptotics in the massless regime (m r << 1)."""
    kind = KernelKind(kind)
    if kind is KernelKind.K:
        return 4.0 / (math.pi - 4.0 * math.pi * r * r)
    return -(math.log(mass * r) + float(EULER_GAMMA) - math.log(2.0)) / math.pi
