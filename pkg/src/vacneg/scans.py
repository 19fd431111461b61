"""Negativity scans over patch separation and the observables derived from them."""

from __future__ import annotations

import enum
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .gaussian import GHPair, log_negativity, pt_symplectic_spectrum
from .lattice import CorrelationKernel, KernelKind, kernel_element
from .patches import ObservationProtocol, PatchPair, patch_state
from .precision import NumericError, PrecisionContext, normalize_columns
from .symplectic import DegeneracyError


class ScanError(NumericError):
    def __init__(self, message: str, rt: int):
        super().__init__(f"r~={rt}: {message}")
        self.rt = rt


@dataclass
class ScanGrid:
    d: int
    mass: float
    protocols: list
    rts: list
    ctx: PrecisionContext = field(default_factory=PrecisionContext)

    def __post_init__(self):
        self.protocols = [ObservationProtocol(p) for p in self.protocols]
        rts = [int(r) for r in self.rts]
        if any(r < 0 for r in rts):
            raise ValueError("separations must be nonnegative")
        if any(b <= a for a, b in zip(rts, rts[1:])):
            raise ValueError("separations must be strictly increasing")
        self.rts = rts


@dataclass
class ScanRecord:
    rt: int
    d: int
    protocol: ObservationProtocol
    negativity: mpfr
    pt_min: mpfr
    wall_time: float

    @property
    def rt_over_d(self) -> float:
        return self.rt / self.d


def _scan_point(kernel: CorrelationKernel, d: int, rt: int, protocols, ctx: PrecisionContext) -> list:
    pair = PatchPair(d, rt)
    out = []
    for proto in protocols:
        t0 = time.perf_counter()
        try:
            spec = pt_symplectic_spectrum(patch_state(kernel, pair, proto, ctx), pair.B_modes, ctx)
        except NumericError as exc:
            raise ScanError(str(exc), rt) from exc
        out.append(ScanRecord(rt, d, proto, log_negativity(spec), spec.minimum, time.perf_counter() - t0))
    return out


def _scan_chunk(args):
    kernel, d, rts, protocols, ctx = args
    return [rec for rt in rts for rec in _scan_point(kernel, d, rt, protocols, ctx)]


def negativity_scan(grid: ScanGrid, kernel: CorrelationKernel, workers: int = 1) -> list:
    """One record per (r~, protocol), in grid order."""
    ctx = grid.ctx
    if grid.rts:
        kernel.warm(2 * grid.d + grid.rts[-1])
    if workers <= 1 or len(grid.rts) < 2:
        return _scan_chunk((kernel, grid.d, grid.rts, grid.protocols, ctx))
    # contiguous slices keep the merge trivially ordered
    n = min(workers, len(grid.rts))
    bounds = np.linspace(0, len(grid.rts), n + 1).astype(int)
    jobs = [(kernel, grid.d, grid.rts[a:b], grid.protocols, ctx) for a, b in zip(bounds, bounds[1:])]
    with ProcessPoolExecutor(max_workers=n) as pool:
        parts = list(pool.map(_scan_chunk, jobs))
    return [rec for part in parts for rec in part]


def pt_min_traced(kernel: CorrelationKernel, d: int, rt: int, ctx: PrecisionContext) -> mpfr:
    pair = PatchPair(d, rt)
    try:
        gh = patch_state(kernel, pair, ObservationProtocol.Traced, ctx)
        return pt_symplectic_spectrum(gh, pair.B_modes, ctx).minimum
    except NumericError as exc:
        raise ScanError(str(exc), rt) from exc


def separability_radius(kernel: CorrelationKernel, d: int, protocol, ctx: PrecisionContext,
                        r_limit: int = 100_000) -> int:
    """Smallest r~ with separable traced patches that stay separable for 2d more sites."""
    if ObservationProtocol(protocol) is not ObservationProtocol.Traced:
        raise ValueError("measured-volume states stay entangled at every separation; use the traced protocol")
    memo = {}

    def separable(rt: int) -> bool:
        if rt not in memo:
            memo[rt] = pt_min_traced(kernel, d, rt, ctx) >= 1
        return memo[rt]

    lo = -1  # largest separation known to be entangled
    while True:
        if separable(lo + 1):
            hi = lo + 1
        else:
            step = 1
            hi = lo + 1
            while not separable(hi):
                lo = hi
                hi = lo + step
                step *= 2
                if hi > r_limit:
                    raise ScanError("no separable separation below the search limit", hi)
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if separable(mid):
                    hi = mid
                else:
                    lo = mid
        bad = next((r for r in range(hi + 1, hi + 2 * d + 1) if not separable(r)), None)
        if bad is None:
            return hi
        lo = bad


def ghgamma_ground_wavefunction(gh: GHPair, pair: PatchPair, ctx: PrecisionContext) -> np.ndarray:
    """Right eigenvector of G H^Gamma for its smallest eigenvalue.

    Unit Euclidean norm over all 2d components.  The sign makes the
    component sum nonnegative; when that sum vanishes (mirror-odd vectors)
    the left-patch sum decides, and then the first significant component.
    """
    spec, V = pt_symplectic_spectrum(gh, pair.B_modes, ctx, return_vectors=True)
    nus = spec.values
    if len(nus) > 1:
        with ctx.local():
            gap = nus[1] - nus[0]
            if gap <= ctx.eig_tol * nus[1]:
                raise DegeneracyError(f"ground eigenvalue of G H^Gamma is degenerate (gap {float(gap):.3e})", gap)
    return normalize_columns(V[:, :1], ctx)[:, 0]


# d = 1 closed forms

def d1_measured_phi(kernel: CorrelationKernel, rt: int, ctx: PrecisionContext) -> mpfr:
    """-log2 (K_00 + K_0,r+1) / sqrt(K_00^2 - K_0,r+1^2)."""
    with ctx.local():
        k0 = kernel_element(kernel, KernelKind.K, 0, ctx)
        kr = kernel_element(kernel, KernelKind.K, rt + 1, ctx)
        return -gmpy2.log2((k0 + kr) / gmpy2.sqrt(k0 * k0 - kr * kr))


def d1_measured_pi(kernel: CorrelationKernel, rt: int, ctx: PrecisionContext) -> mpfr:
    """-log2 (Q_00 - Q_0,r+1) / sqrt(Q_00^2 - Q_0,r+1^2) with Q = K^-1."""
    with ctx.local():
        q0 = kernel_element(kernel, KernelKind.Kinv, 0, ctx)
        qr = kernel_element(kernel, KernelKind.Kinv, rt + 1, ctx)
        return -gmpy2.log2((q0 - qr) / gmpy2.sqrt(q0 * q0 - qr * qr))


def d1_measured_phi_asymptote(kernel: CorrelationKernel, rt: int, ctx: PrecisionContext) -> float:
    """Leading off-diagonal envelope -K_0,r+1 / (ln 2 K_00)."""
    k0 = kernel_element(kernel, KernelKind.K, 0, ctx)
    kr = kernel_element(kernel, KernelKind.K, rt + 1, ctx)
    return -float(kr) / (math.log(2.0) * float(k0))


class EnvelopeModel(enum.Enum):
    exponential_in_r_over_d = "exponential_in_r_over_d"
    polynomial = "polynomial"
    logarithmic = "logarithmic"


@dataclass
class EnvelopeFit:
    model: EnvelopeModel
    parameters: list
    window: tuple
    residual: float
    n_points: int

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.parameters
        if self.model is EnvelopeModel.exponential_in_r_over_d:
            return a * np.exp(-b * x)
        if self.model is EnvelopeModel.polynomial:
            return a * x ** b
        return a + b * np.log(x)


def envelope_fit(records: Iterable, model, window: Sequence[float]) -> EnvelopeFit:
    """Least squares in the transformed domain.

    ``records`` are ScanRecords or (r~/d, N) pairs; ``window`` bounds r~/d.

    - exponential: log N = log a - beta x, parameters (a, beta)
    - polynomial:  log N = log a + p log x, parameters (a, p)
    - logarithmic: N = a + b log x, parameters (a, b)

    The residual is the largest relative deviation of the fit from the data.
    """
    model = EnvelopeModel(model)
    lo, hi = float(window[0]), float(window[1])
    pts = []
    for rec in records:
        if isinstance(rec, ScanRecord):
            pts.append((rec.rt_over_d, float(rec.negativity)))
        else:
            pts.append((float(rec[0]), float(rec[1])))
    pts = [(x, y) for x, y in pts if lo <= x <= hi]
    if len(pts) < 4:
        raise ValueError(f"envelope fit needs at least 4 points in the window, got {len(pts)}")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    log_y = model is not EnvelopeModel.logarithmic
    log_x = model is not EnvelopeModel.exponential_in_r_over_d
    if log_y and np.any(y <= 0):
        raise ValueError("log-domain fit window contains zero or negative negativities")
    if log_x and np.any(x <= 0):
        raise ValueError("log-x fit window must exclude r~ = 0")
    X = np.log(x) if log_x else x
    Y = np.log(y) if log_y else y
    slope, icept = np.polyfit(X, Y, 1)
    if model is EnvelopeModel.exponential_in_r_over_d:
        params = [float(np.exp(icept)), float(-slope)]
    elif model is EnvelopeModel.polynomial:
        params = [float(np.exp(icept)), float(slope)]
    else:
        params = [float(icept), float(slope)]
    fit = EnvelopeFit(model, params, (lo, hi), 0.0, len(pts))
    fit.residual = float(np.max(np.abs(fit.predict(x) - y) / np.abs(y)))
    return fit


def fit_separability_scaling(ds: Sequence[int], radii: Sequence[int]) -> float:
    """gamma in r~/d ~ gamma d from radii measured at several d (least squares through 0)."""
    d = np.asarray(ds, dtype=float)
    y = np.asarray(radii, dtype=float) / d
    return float(np.dot(d, y) / np.dot(d, d))
