import math

import mpmath
import numpy as np
import pytest
from gmpy2 import mpfr

from vacneg.gaussian import GHPair, cm_from_GH
from vacneg.lattice import (
    INFINITE,
    MASSLESS,
    CorrelationKernel,
    FiniteN,
    KernelKind,
    LatticeSpec,
    UnsupportedVolumeError,
    assemble_K_block,
    hypergeometric_element,
    kernel_element,
    massive_envelope,
    massless_envelope,
    vacuum_GH,
)
from vacneg.precision import PrecisionContext, det, hp_inverse, max_abs, spd_inverse, sym_eigen, to_float


def bz_integral(mass, kind, r, dps=40):
    """Brillouin-zone integral by Gauss-Legendre, split where the integrand is sharp."""
    with mpmath.workdps(dps):
        m = mpmath.mpf(str(mass))
        p = 1 if kind is KernelKind.K else -1

        def f(k):
            return mpmath.cos(k * r) * (m ** 2 + 4 * mpmath.sin(k / 2) ** 2) ** (p * mpmath.mpf(1) / 2)

        # geometric breakpoints resolve the 1/k peak of the light-mass integrand
        pts = [0] + [m * mpmath.mpf(10) ** (j / 2) for j in range(-2, 40)] + [mpmath.pi]
        pts = sorted(set(x for x in pts if 0 <= x <= mpmath.pi))
        # the integrand is even about pi
        return mpmath.quad(f, pts, method="gauss-legendre") / mpmath.pi


def test_spec_validation():
    with pytest.raises(ValueError):
        LatticeSpec(0.0)
    with pytest.raises(ValueError):
        LatticeSpec(-1)
    with pytest.raises(ValueError):
        FiniteN(1)


@pytest.mark.parametrize("mass", [0.3, 1.0, MASSLESS])
@pytest.mark.parametrize("kind", list(KernelKind))
def test_origin_matches_gauss_legendre(ctx, mass, kind):
    kernel = CorrelationKernel(LatticeSpec(mass), ctx)
    got = kernel.element(kind, 0)
    ref = bz_integral(mass, kind, 0)
    assert abs(float(got) - float(ref)) <= 1e-25 * abs(float(ref))


@pytest.mark.parametrize("mass", [0.3, 1.0])
def test_off_origin_matches_gauss_legendre(ctx, mass):
    kernel = CorrelationKernel(LatticeSpec(mass), ctx)
    for kind in KernelKind:
        for r in (1, 2, 7):
            ref = bz_integral(mass, kind, r)
            assert abs(float(kernel.element(kind, r)) - float(ref)) <= 1e-20 * abs(float(ref))


@pytest.mark.parametrize("kind", list(KernelKind))
def test_hypergeometric_oracle(ctx, kind):
    kernel = CorrelationKernel(LatticeSpec(1.0), ctx)
    for r in range(6):
        ref = hypergeometric_element(1.0, kind, r, dps=40)
        with mpmath.workdps(40):
            assert abs(mpmath.mpf(str(kernel.element(kind, r))) - ref) < mpmath.mpf(10) ** -30 * abs(ref)


def test_evenness_and_signs(ctx, massive, massless):
    for kernel in (massive, massless):
        assert kernel.element(KernelKind.K, 0) > 0
        for r in range(1, 30):
            assert kernel.element(KernelKind.K, r) < 0
            assert kernel.element(KernelKind.K, -r) == kernel.element(KernelKind.K, r)
            assert kernel.element(KernelKind.Kinv, -r) == kernel.element(KernelKind.Kinv, r)


def test_massive_envelope(massive):
    for kind in KernelKind:
        ratio = float(massive.element(kind, 40)) / massive_envelope(0.3, kind, 40)
        assert abs(ratio - 1) < 0.1


def test_massless_polynomial_envelope(massless):
    ratio = float(massless.element(KernelKind.K, 10)) / massless_envelope(MASSLESS, KernelKind.K, 10)
    assert abs(ratio - 1) < 0.01


def test_massless_log_envelope(massless):
    for r in (20, 50, 100):
        ratio = float(massless.element(KernelKind.Kinv, r)) / massless_envelope(MASSLESS, KernelKind.Kinv, r)
        assert abs(ratio - 1) < 1e-3


def test_finite_sum(ctx):
    N, m = 6, 0.3
    kernel = CorrelationKernel(LatticeSpec(m, FiniteN(N)), ctx)
    for kind, p in ((KernelKind.K, 0.5), (KernelKind.Kinv, -0.5)):
        for r in range(N):
            ref = sum(math.cos(2 * math.pi * k * r / N) * (m * m + 4 * math.sin(math.pi * k / N) ** 2) ** p
                      for k in range(N)) / N
            assert abs(float(kernel.element(kind, r)) - ref) < 1e-14
        assert kernel.element(kind, 1) == kernel.element(kind, N - 1)
        assert kernel.element(kind, 2) == kernel.element(kind, N + 2)


def test_finite_inverse_consistency(ctx):
    kernel = CorrelationKernel(LatticeSpec(0.5, FiniteN(10)), ctx)
    sites = list(range(10))
    K = assemble_K_block(kernel, sites, sites, KernelKind.K, ctx)
    Kinv = assemble_K_block(kernel, sites, sites, KernelKind.Kinv, ctx)
    with ctx.local():
        assert max_abs(hp_inverse(K, ctx) - Kinv) < ctx.eig_tol


def test_restriction_and_inversion_do_not_commute(ctx, massive):
    for d, gap in ((1, 0), (2, 1), (3, 4)):
        p = list(range(d)) + list(range(d + gap, 2 * d + gap))
        restricted = to_float(assemble_K_block(massive, p, p, KernelKind.Kinv, ctx))
        inverted = to_float(spd_inverse(assemble_K_block(massive, p, p, KernelKind.K, ctx), ctx))
        assert np.all(np.abs(restricted - inverted) > 1e-6)


def test_block_assembly(ctx, massive):
    assert assemble_K_block(massive, [0], [0], KernelKind.K, ctx)[0, 0] == massive.element(KernelKind.K, 0)
    rows, cols = [0, 1, 5], [2, 9]
    a = assemble_K_block(massive, rows, cols, KernelKind.K, ctx)
    b = assemble_K_block(massive, cols, rows, KernelKind.K, ctx)
    assert (a == b.T).all()
    M = assemble_K_block(massive, [0, 4], [0, 4], KernelKind.K, ctx)
    assert M[0, 1] == massive.element(KernelKind.K, 4) and M[0, 0] == M[1, 1]


def test_finite_converges_to_infinite(ctx):
    inf = CorrelationKernel(LatticeSpec(1.0), ctx)
    k64 = CorrelationKernel(LatticeSpec(1.0, FiniteN(64)), ctx)
    assert abs(float(k64.element(KernelKind.K, 0) - inf.element(KernelKind.K, 0))) < 1e-6
    for r in (1, 3):
        errs = []
        for N in range(max(4 * r, 4), 40, 2):
            fin = CorrelationKernel(LatticeSpec(1.0, FiniteN(N)), ctx)
            with ctx.local():
                errs.append(abs(fin.element(KernelKind.K, r) - inf.element(KernelKind.K, r)))
        assert all(b < a for a, b in zip(errs, errs[1:]))


def test_vacuum_is_pure(ctx, lattice6):
    G, H = vacuum_GH(lattice6, None, ctx)
    cm = cm_from_GH(GHPair(G, H))
    with ctx.local():
        assert abs(det(cm.data, ctx) - 1) < mpfr(2) ** -200
        vals, _ = sym_eigen((4 * G @ H + (4 * G @ H).T) / 2, ctx, vectors=False)
        assert all(abs(v - 1) < ctx.eig_tol for v in vals)


def test_vacuum_needs_finite_lattice(ctx, massive):
    with pytest.raises(UnsupportedVolumeError):
        vacuum_GH(massive, [0, 1], ctx)


def test_precision_tagged_cache():
    spec = LatticeSpec(0.3, INFINITE)
    k = CorrelationKernel(spec, PrecisionContext(512))
    lo, hi = PrecisionContext(128), PrecisionContext(512)
    a = kernel_element(k, KernelKind.K, 3, lo)
    b = kernel_element(k, KernelKind.K, 3, hi)
    assert a.precision == 128 and b.precision == 512
    assert abs(float(a) - float(b)) < 1e-30
