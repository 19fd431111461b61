import math

import numpy as np
import pytest

from vacneg.gaussian import log_negativity, pt_symplectic_spectrum
from vacneg.lattice import MASSLESS, CorrelationKernel, FiniteN, LatticeSpec
from vacneg.patches import GeometryError, ObservationProtocol, PatchPair, patch_state
from vacneg.precision import to_float
from vacneg.scans import (
    EnvelopeModel,
    ScanError,
    ScanGrid,
    d1_measured_phi,
    d1_measured_phi_asymptote,
    d1_measured_pi,
    envelope_fit,
    fit_separability_scaling,
    ghgamma_ground_wavefunction,
    negativity_scan,
    pt_min_traced,
    separability_radius,
)
from conftest import ALL_PROTOCOLS

Traced, MPhi, MPi = ObservationProtocol.Traced, ObservationProtocol.MeasuredPhi, ObservationProtocol.MeasuredPi


def sign_changes(v):
    s = [x for x in v if abs(x) > 1e-3]
    return sum(1 for a, b in zip(s, s[1:]) if a * b < 0)


def test_grid_validation(ctx):
    with pytest.raises(ValueError):
        ScanGrid(1, 0.3, ["traced"], [0, 2, 1], ctx)
    with pytest.raises(ValueError):
        ScanGrid(1, 0.3, ["traced"], [-1, 2], ctx)
    with pytest.raises(ValueError):
        ScanGrid(1, 0.3, ["nope"], [0], ctx)


def test_scan_examples(table1_records):
    assert round(float(table1_records[(32, Traced)].negativity), 7) == 5.828e-4
    assert round(float(table1_records[(320, MPhi)].negativity), 7) == 4.351e-4
    assert table1_records[(264, Traced)].negativity == 0


def test_monotone_decay_and_termination(table1_records):
    rts = sorted({rt for rt, _ in table1_records})
    for proto in ALL_PROTOCOLS:
        series = [table1_records[(rt, proto)].negativity for rt in rts]
        assert all(b <= a for a, b in zip(series, series[1:]))
        if proto is not Traced:
            assert all(x > 0 for x in series)
    assert all(table1_records[(rt, Traced)].negativity == 0 for rt in rts if rt > 264)
    assert all(table1_records[(rt, Traced)].pt_min >= 1 for rt in rts if rt > 264)


def test_parallel_scan_matches_serial(ctx, massive):
    grid = ScanGrid(2, 0.3, ["traced", "m_phi"], [0, 1, 2, 5, 8], ctx)
    serial = negativity_scan(grid, massive, workers=1)
    parallel = negativity_scan(grid, massive, workers=3)
    assert [(r.rt, r.protocol, r.negativity) for r in serial] == [(r.rt, r.protocol, r.negativity) for r in parallel]


def test_scan_reports_the_failing_separation(ctx):
    kernel = CorrelationKernel(LatticeSpec(0.3, FiniteN(8)), ctx)
    with pytest.raises(GeometryError):
        negativity_scan(ScanGrid(2, 0.3, ["traced"], [0, 4], ctx), kernel)


def test_separability_small(ctx, massive):
    assert separability_radius(massive, 1, Traced, ctx) == 1
    assert pt_min_traced(massive, 1, 0, ctx) < 1 <= pt_min_traced(massive, 1, 1, ctx)
    with pytest.raises(ValueError):
        separability_radius(massive, 1, MPhi, ctx)


def test_separability_limit(ctx, massless):
    with pytest.raises(ScanError):
        separability_radius(massless, 4, Traced, ctx, r_limit=8)


def test_separability_scaling_fit():
    assert fit_separability_scaling([4, 8, 16], [16, 64, 256]) == pytest.approx(1.0)


@pytest.mark.parametrize("mass", [MASSLESS, 0.3, 1.0])
def test_d1_closed_forms_sample(ctx, mass):
    kernel = CorrelationKernel(LatticeSpec(mass), ctx)
    for rt in (0, 7, 60):
        pair = PatchPair(1, rt)
        for proto, closed in ((MPhi, d1_measured_phi), (MPi, d1_measured_pi)):
            gh = patch_state(kernel, pair, proto, ctx)
            full = log_negativity(pt_symplectic_spectrum(gh, pair.B_modes, ctx))
            ref = closed(kernel, rt, ctx)
            with ctx.local():
                assert abs(full - ref) <= ctx.eig_tol * ref


def test_polynomial_envelope_d1(ctx, massless):
    grid = ScanGrid(1, MASSLESS, ["m_phi"], list(range(100, 401, 20)), ctx)
    fit = envelope_fit(negativity_scan(grid, massless), EnvelopeModel.polynomial, (100, 400))
    assert abs(fit.parameters[1] + 2) < 0.1
    assert fit.n_points == 16


def test_d1_asymptote(ctx, massless):
    ratio = float(d1_measured_phi(massless, 200, ctx)) / d1_measured_phi_asymptote(massless, 200, ctx)
    assert abs(ratio - 1) < 1e-3


def test_traced_envelope_model_comparison(table1_records):
    recs = [r for (rt, p), r in table1_records.items() if p is Traced]
    exp_fit = envelope_fit(recs, "exponential_in_r_over_d", (1, 8))
    log_fit = envelope_fit(recs, "logarithmic", (1, 8))
    assert exp_fit.residual < log_fit.residual
    assert exp_fit.parameters[1] > 0


def test_envelope_fit_guards():
    pts = [(x, math.exp(-x)) for x in (1, 2, 3, 4, 5)]
    fit = envelope_fit(pts, "exponential_in_r_over_d", (1, 5))
    assert fit.parameters[1] == pytest.approx(1.0) and fit.residual < 1e-12
    with pytest.raises(ValueError):
        envelope_fit(pts, "polynomial", (1, 2))
    with pytest.raises(ValueError):
        envelope_fit([(0, 1), (1, 1), (2, 1), (3, 1)], "polynomial", (0, 3))
    with pytest.raises(ValueError):
        envelope_fit([(1, 0), (2, 1), (3, 1), (4, 1)], "polynomial", (1, 4))


@pytest.mark.parametrize("proto,rt", [(MPhi, 0), (MPhi, 150), (Traced, 5), (Traced, 300)])
def test_wavefunction_shape(ctx, massless, proto, rt):
    pair = PatchPair(16, rt)
    v = to_float(ghgamma_ground_wavefunction(patch_state(massless, pair, proto, ctx), pair, ctx))
    assert abs(np.linalg.norm(v) - 1) < 1e-12
    left, right = v[:16], v[16:]
    # nonnegative sum, or for mirror-odd vectors a nonnegative left-patch sum
    assert v.sum() > 1e-9 or (abs(v.sum()) < 1e-12 and left.sum() > 0)
    assert np.allclose(np.abs(left), np.abs(right[::-1]), atol=1e-12)
    if proto is MPhi:
        assert sign_changes(left) == 0
    elif rt == 300:
        assert sign_changes(left) >= 4


def test_wavefunction_first_row(ctx, massless):
    pair = PatchPair(16, 0)
    v = to_float(ghgamma_ground_wavefunction(patch_state(massless, pair, MPhi, ctx), pair, ctx))
    assert round(v[0], 3) == 0.034 and round(v[15], 3) == 0.346


def test_massive_traced_uv_profile(ctx, massive):
    pair = PatchPair(16, 70)
    v = to_float(ghgamma_ground_wavefunction(patch_state(massive, pair, Traced, ctx), pair, ctx))
    left = v[:16] * np.sign(v[np.argmax(np.abs(v[:16]))])
    assert abs(left[0] / 1.054e-7 - 1) < 5e-3
