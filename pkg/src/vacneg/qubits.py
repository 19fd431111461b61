"""Few-qubit bench: GHZ pair extraction and delocalisation by correlated noise.

Plain double precision throughout.  Qubit 0 is the most significant bit of
the computational-basis index.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Bell pairs nested about the A = {0, 1} | B = {2, 3} boundary, mirroring the
# patch-pair layout: (1, 2) adjacent, (0, 3) outer
BELL_PAIRS = ((0, 3), (1, 2))
A_QUBITS = (0, 1)


class QuadratureAccuracyWarning(UserWarning):
    pass


@dataclass
class DenseState:
    n_qubits: int
    rho: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n_qubits <= 6:
            raise ValueError("DenseState supports 1 to 6 qubits")
        dim = 2 ** self.n_qubits
        self.rho = np.asarray(self.rho, dtype=complex)
        if self.rho.shape != (dim, dim):
            raise ValueError(f"density matrix must be {dim}x{dim}")
        if np.max(np.abs(self.rho - self.rho.conj().T)) > 1e-12:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(self.rho) - 1) > 1e-12:
            raise ValueError("density matrix does not have unit trace")
        if np.linalg.eigvalsh(self.rho)[0] < -1e-12:
            raise ValueError("density matrix is not positive semidefinite")

    @classmethod
    def from_vector(cls, psi) -> "DenseState":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        n = int(round(math.log2(psi.size)))
        return cls(n, np.outer(psi, psi.conj()))

    def reduce(self, keep: Sequence[int]) -> "DenseState":
        """Partial trace onto ``keep`` (kept in the given order)."""
        n = self.n_qubits
        keep = list(keep)
        drop = [q for q in range(n) if q not in keep]
        t = self.rho.reshape([2] * (2 * n))
        perm = keep + drop
        t = t.transpose(perm + [n + q for q in perm])
        k, r = 2 ** len(keep), 2 ** len(drop)
        t = t.reshape(k, r, k, r)
        return DenseState(len(keep), np.einsum("ajbj->ab", t))


def partial_transpose(state: DenseState, B_qubits: Sequence[int]) -> np.ndarray:
    n = state.n_qubits
    t = state.rho.reshape([2] * (2 * n))
    axes = list(range(2 * n))
    for q in B_qubits:
        axes[q], axes[n + q] = axes[n + q], axes[q]
    return t.transpose(axes).reshape(2 ** n, 2 ** n)


def qubit_log_negativity(state: DenseState, A_qubits: Sequence[int]) -> float:
    """log2 of the trace norm of the partial transpose over the complement of A."""
    A = set(A_qubits)
    B = [q for q in range(state.n_qubits) if q not in A]
    if not A or not B:
        raise ValueError("bipartition must leave both sides nonempty")
    ev = np.linalg.eigvalsh(partial_transpose(state, B))
    return max(0.0, float(math.log2(np.sum(np.abs(ev)))))


@dataclass
class GHZReport:
    traced_pair_negativity: float
    conditioned_negativity: dict
    outcome_probability: dict
    bell_fidelity: dict

    @property
    def ok(self) -> bool:
        return (abs(self.traced_pair_negativity) < 1e-12
                and all(abs(v - 1) < 1e-12 for v in self.conditioned_negativity.values())
                and all(abs(f - 1) < 1e-12 for f in self.bell_fidelity.values()))


def ghz_extraction_check() -> GHZReport:
    """Trace vs. measure the third qubit of a GHZ state.

    Tracing leaves a separable mixture.  A Hadamard on the third qubit,
    a computational-basis measurement and, for outcome 1, a Z correction on
    the first qubit leave the Bell state (|00> + |11>)/sqrt 2 either way.
    """
    ghz = np.zeros(8, dtype=complex)
    ghz[0] = ghz[7] = 1 / math.sqrt(2)
    traced = DenseState.from_vector(ghz).reduce([0, 1])
    h = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    z = np.diag([1.0, -1.0])
    rotated = np.kron(np.eye(4), h) @ ghz
    bell = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)
    negs, probs, fids = {}, {}, {}
    for outcome in (0, 1):
        branch = rotated.reshape(4, 2)[:, outcome]
        p = float(np.vdot(branch, branch).real)
        branch = branch / math.sqrt(p)
        if outcome == 1:
            branch = np.kron(z, np.eye(2)) @ branch
        negs[outcome] = qubit_log_negativity(DenseState.from_vector(branch), [0])
        probs[outcome] = p
        fids[outcome] = float(abs(np.vdot(bell, branch)) ** 2)
    return GHZReport(qubit_log_negativity(traced, [0]), negs, probs, fids)


def bell_pair_state(pairs=BELL_PAIRS, n_qubits: int = 4) -> np.ndarray:
    """Product of |Phi+> on each listed qubit pair."""
    psi = np.zeros(2 ** n_qubits, dtype=complex)
    for bits in range(2 ** len(pairs)):
        idx = 0
        for k, (a, b) in enumerate(pairs):
            if (bits >> k) & 1:
                idx |= 1 << (n_qubits - 1 - a)
                idx |= 1 << (n_qubits - 1 - b)
        psi[idx] = 1
    return psi / np.linalg.norm(psi)


def _rotate_batch(psi: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Apply exp(-i theta_q sigma_x) on every qubit q, one row of theta per state."""
    n = theta.shape[1]
    out = np.broadcast_to(psi, (theta.shape[0],) + psi.shape).reshape((theta.shape[0],) + (2,) * n).copy()
    for q in range(n):
        c = np.cos(theta[:, q]).reshape((-1,) + (1,) * n)
        s = np.sin(theta[:, q]).reshape((-1,) + (1,) * n)
        flipped = np.flip(out, axis=q + 1)
        out = c * out - 1j * s * flipped
    return out.reshape(theta.shape[0], -1)


def noisy_density_matrix(Sigma, order: int, psi=None, chunk: int = 1 << 16) -> np.ndarray:
    """rho(Sigma) = E[R(theta) |psi><psi| R(theta)^dagger], theta ~ N(0, Sigma^-1).

    Tensor-product Gauss-Hermite quadrature after whitening theta = L z with
    Sigma^-1 = L L^T.  Nodes are summed in lexicographic order.
    """
    Sigma = np.asarray(Sigma, dtype=float)
    n = Sigma.shape[0]
    if Sigma.shape != (n, n) or not np.allclose(Sigma, Sigma.T):
        raise ValueError("Sigma must be a symmetric matrix")
    if np.linalg.eigvalsh(Sigma)[0] <= 0:
        raise ValueError("Sigma must be positive definite")
    psi = bell_pair_state(n_qubits=n) if psi is None else np.asarray(psi, dtype=complex)
    L = np.linalg.cholesky(np.linalg.inv(Sigma))
    x, w = np.polynomial.hermite_e.hermegauss(order)
    w = w / math.sqrt(2 * math.pi)
    grids = np.stack(np.meshgrid(*([np.arange(order)] * n), indexing="ij"), axis=-1).reshape(-1, n)
    dim = psi.size
    rho = np.zeros((dim, dim), dtype=complex)
    for start in range(0, grids.shape[0], chunk):
        idx = grids[start:start + chunk]
        z = x[idx]
        weight = np.prod(w[idx], axis=1)
        states = _rotate_batch(psi, z @ L.T)
        rho += np.einsum("n,ni,nj->ij", weight, states, states.conj())
    return (rho + rho.conj().T) / 2


@dataclass
class NoiseReport:
    total: float
    two_body_sum: float
    pair_negativities: list
    order: int
    warnings: list = field(default_factory=list)


def correlated_noise_negativity(Sigma, quadrature_order: int = 32, pairs=BELL_PAIRS,
                                A_qubits=A_QUBITS) -> NoiseReport:
    """A|B negativity of rho(Sigma) and the sum over the Bell-pair reductions."""
    notes = []
    if quadrature_order < 8:
        msg = f"Gauss-Hermite order {quadrature_order} < 8; results may be inaccurate"
        warnings.warn(msg, QuadratureAccuracyWarning, stacklevel=2)
        notes.append(msg)
    n = np.asarray(Sigma).shape[0]
    rho = DenseState(n, noisy_density_matrix(Sigma, quadrature_order, bell_pair_state(pairs, n)))
    total = qubit_log_negativity(rho, A_qubits)
    per_pair = [qubit_log_negativity(rho.reduce([a, b]), [0]) for a, b in pairs]
    return NoiseReport(total, float(sum(per_pair)), per_pair, quadrature_order, notes)
