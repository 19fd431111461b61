"""Two disjoint field patches observed by tracing or by measuring the volume.

Patch A occupies sites 0..d-1 and patch B sites d+gap..2d+gap-1.  With p the
patch sites and v the rest of the lattice:

    traced        G = (K^-1)_pp / 2      H = K_pp / 2
    phi-measured  G = (K_pp)^-1 / 2      H = K_pp / 2
    pi-measured   G = (K^-1)_pp / 2      H = ((K^-1)_pp)^-1 / 2

The measured states are pure; the traced state exceeds each by a PSD matrix
Y of classical first-moment noise, confined to phi (phi-basis measurement)
or pi (pi-basis measurement).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .gaussian import GHPair
from .lattice import CorrelationKernel, FiniteN, KernelKind, UnsupportedVolumeError, assemble_K_block
from .precision import (
    HPMatrix,
    NumericError,
    PrecisionContext,
    hp_inverse,
    max_abs,
    spd_inverse,
    sym_eigen,
    symmetrize,
    to_float,
    zeros,
)


class GeometryError(ValueError):
    pass


class ObservationProtocol(enum.Enum):
    Traced = "traced"
    MeasuredPhi = "m_phi"
    MeasuredPi = "m_pi"


@dataclass(frozen=True)
class PatchPair:
    d: int
    gap: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise GeometryError(f"patch size must be >= 1, got {self.d}")
        if int(self.gap) != self.gap or self.gap < 0:
            raise GeometryError(f"gap must be >= 0, got {self.gap}")

    @property
    def A(self) -> list[int]:
        return list(range(self.d))

    @property
    def B(self) -> list[int]:
        return list(range(self.d + self.gap, 2 * self.d + self.gap))

    @property
    def sites(self) -> list[int]:
        return self.A + self.B

    @property
    def span(self) -> int:
        return 2 * self.d + self.gap

    @property
    def A_modes(self) -> list[int]:
        """Mode indices of patch A inside the 2d-mode patch state."""
        return list(range(self.d))

    @property
    def B_modes(self) -> list[int]:
        return list(range(self.d, 2 * self.d))

    def volume_sites(self, N: int) -> list[int]:
        taken = set(self.sites)
        return [s for s in range(N) if s not in taken]


@dataclass
class NoiseMatrix:
    Y_phi: HPMatrix
    Y_pi: HPMatrix
    closed_form: HPMatrix | None = None
    closed_form_deviation: object = None


class NoiseNotPSDError(NumericError):
    pass


def _check_geometry(kernel: CorrelationKernel, pair: PatchPair) -> None:
    vol = kernel.spec.volume
    if isinstance(vol, FiniteN) and pair.span >= vol.N:
        raise GeometryError(f"patches span {pair.span} sites; the periodic lattice needs more than that, has {vol.N}")


def patch_state(kernel: CorrelationKernel, pair: PatchPair, proto: ObservationProtocol,
                ctx: PrecisionContext) -> GHPair:
    proto = ObservationProtocol(proto)
    _check_geometry(kernel, pair)
    p = pair.sites
    with ctx.local():
        if proto is ObservationProtocol.MeasuredPhi:
            K = assemble_K_block(kernel, p, p, KernelKind.K, ctx)
            return GHPair(spd_inverse(K, ctx) / 2, K / 2)
        Kinv = assemble_K_block(kernel, p, p, KernelKind.Kinv, ctx)
        if proto is ObservationProtocol.MeasuredPi:
            return GHPair(Kinv / 2, spd_inverse(Kinv, ctx) / 2)
        K = assemble_K_block(kernel, p, p, KernelKind.K, ctx)
        return GHPair(Kinv / 2, K / 2)


def _closed_form_noise(kernel, pair, kind: KernelKind, ctx) -> HPMatrix:
    """(I - Kbar)^-1 Kbar (M_pp)^-1 with Kbar = (M_pp)^-1 M_pv (M_vv)^-1 M_pv^T."""
    N = kernel.spec.volume.N
    p, v = pair.sites, pair.volume_sites(N)
    M_pp = assemble_K_block(kernel, p, p, kind, ctx)
    M_pv = assemble_K_block(kernel, p, v, kind, ctx)
    M_vv = assemble_K_block(kernel, v, v, kind, ctx)
    inv_pp = spd_inverse(M_pp, ctx)
    with ctx.local():
        kbar = inv_pp @ M_pv @ spd_inverse(M_vv, ctx) @ M_pv.T
        n = len(p)
        one_minus = -kbar
        for i in range(n):
            one_minus[i, i] += 1
        return symmetrize(hp_inverse(one_minus, ctx) @ kbar @ inv_pp, ctx)


def noise_matrix(kernel: CorrelationKernel, pair: PatchPair, basis: str, ctx: PrecisionContext) -> NoiseMatrix:
    """Classical displacement noise Y = sigma^(t) - sigma^(m) for one basis.

    Returned blocks are in CM units (twice the two-point functions).  On a
    finite lattice the closed form is evaluated as well and its deviation
    from the difference form recorded.
    """
    if basis not in ("phi", "pi"):
        raise ValueError("basis must be 'phi' or 'pi'")
    traced = patch_state(kernel, pair, ObservationProtocol.Traced, ctx)
    proto = ObservationProtocol.MeasuredPhi if basis == "phi" else ObservationProtocol.MeasuredPi
    measured = patch_state(kernel, pair, proto, ctx)
    n = len(pair.sites)
    with ctx.local():
        if basis == "phi":
            Y = symmetrize(2 * (traced.G - measured.G), ctx)
            out = NoiseMatrix(Y_phi=Y, Y_pi=zeros(n, n, ctx))
        else:
            Y = symmetrize(2 * (traced.H - measured.H), ctx)
            out = NoiseMatrix(Y_phi=zeros(n, n, ctx), Y_pi=Y)
    values, _ = sym_eigen(Y, ctx, vectors=False)
    scale = max(max_abs(Y), 1)
    if values[0] < -ctx.eig_tol * scale:
        raise NoiseNotPSDError(f"noise matrix has eigenvalue {float(values[0]):.3e}; increase precision")
    if isinstance(kernel.spec.volume, FiniteN):
        kind = KernelKind.K if basis == "phi" else KernelKind.Kinv
        closed = _closed_form_noise(kernel, pair, kind, ctx)
        with ctx.local():
            out.closed_form = closed
            out.closed_form_deviation = max_abs(closed - Y)
    return out


def displacement_from_volume(kernel: CorrelationKernel, pair: PatchPair, phi_v, ctx: PrecisionContext,
                             basis: str = "phi") -> np.ndarray:
    """Patch first moments selected by a measured volume configuration.

    phi basis: <phi_p> = -(K_pp)^-1 K_pv phi_v.  The pi basis is the same
    map with K replaced by K^-1 (and phi_v read as pi_v).
    """
    vol = kernel.spec.volume
    if not isinstance(vol, FiniteN):
        raise UnsupportedVolumeError("volume configurations need a finite lattice")
    _check_geometry(kernel, pair)
    p, v = pair.sites, pair.volume_sites(vol.N)
    phi_v = list(phi_v)
    if len(phi_v) != len(v):
        raise ValueError(f"volume configuration has {len(phi_v)} entries, expected {len(v)}")
    kind = KernelKind.K if basis == "phi" else KernelKind.Kinv
    M_pp = assemble_K_block(kernel, p, p, kind, ctx)
    M_pv = assemble_K_block(kernel, p, v, kind, ctx)
    with ctx.local():
        x = np.array([ctx.mpf(a) for a in phi_v], dtype=object)
        return -(spd_inverse(M_pp, ctx) @ (M_pv @ x))


@dataclass
class MixtureReport:
    n_samples: int
    estimate: np.ndarray | None = None
    target: np.ndarray | None = None
    std_error: np.ndarray | None = None
    max_deviation: float = float("nan")
    max_z: float = float("nan")

    @property
    def within(self) -> float:
        return self.max_z


def mixture_reconstruction_check(kernel: CorrelationKernel, pair: PatchPair, basis: str, n_samples: int,
                                 seed: int, ctx: PrecisionContext, chunk: int = 200_000) -> MixtureReport:
    """Monte-Carlo check that averaging displaced pure states rebuilds Y.

    Volume configurations are drawn from their marginal under the global
    vacuum.  |psi(phi)|^2 is Gaussian with covariance K^-1 / 2, so the
    volume marginal has covariance (K^-1)_vv / 2 = (K_vv - K_vp K_pp^-1 K_pv)^-1 / 2;
    the pi basis swaps K and K^-1.  The estimate 2 E[<q_p,i><q_p,j>] must
    agree with Y entrywise within its standard error.
    """
    if n_samples <= 0:
        return MixtureReport(0)
    vol = kernel.spec.volume
    if not isinstance(vol, FiniteN):
        raise UnsupportedVolumeError("sampling the volume needs a finite lattice")
    p, v = pair.sites, pair.volume_sites(vol.N)
    kind, other = (KernelKind.K, KernelKind.Kinv) if basis == "phi" else (KernelKind.Kinv, KernelKind.K)
    M_pp = to_float(assemble_K_block(kernel, p, p, kind, ctx))
    M_pv = to_float(assemble_K_block(kernel, p, v, kind, ctx))
    cov_v = to_float(assemble_K_block(kernel, v, v, other, ctx)) / 2
    response = -np.linalg.solve(M_pp, M_pv)
    noise = noise_matrix(kernel, pair, basis, ctx)
    target = to_float(noise.Y_phi if basis == "phi" else noise.Y_pi)

    rng = np.random.default_rng(seed)
    n = len(p)
    s1 = np.zeros((n, n))
    s2 = np.zeros((n, n))
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        x = rng.multivariate_normal(np.zeros(len(v)), cov_v, size=m, method="cholesky")
        disp = x @ response.T
        prod = 2.0 * disp[:, :, None] * disp[:, None, :]
        s1 += prod.sum(axis=0)
        s2 += (prod ** 2).sum(axis=0)
        done += m
    mean = s1 / n_samples
    var = np.maximum(s2 / n_samples - mean ** 2, 0.0)
    se = np.sqrt(var / n_samples)
    dev = np.abs(mean - target)
    z = dev / np.where(se > 0, se, math.inf)
    return MixtureReport(n_samples, mean, target, se, float(dev.max()), float(z.max()))
