import itertools
import math

import numpy as np
import pytest

from vacneg.cli import sigma2_matrix
from vacneg.qubits import (
    A_QUBITS,
    BELL_PAIRS,
    DenseState,
    QuadratureAccuracyWarning,
    bell_pair_state,
    correlated_noise_negativity,
    ghz_extraction_check,
    noisy_density_matrix,
    partial_transpose,
    qubit_log_negativity,
)


def analytic_rho(Sigma, psi):
    """exp(-i theta sigma_x) = sum_s exp(-i s theta) P_s with P_s = (1 + s sigma_x)/2, so
    rho = sum_{s,s'} E[exp(-i (s - s').theta)] P_s psi psi^dag P_s', and the Gaussian
    characteristic function gives E[exp(i k.theta)] = exp(-k^T Sigma^-1 k / 2)."""
    n = Sigma.shape[0]
    cov = np.linalg.inv(Sigma)
    x = np.array([[0, 1], [1, 0]])
    proj = {s: (np.eye(2) + s * x) / 2 for s in (1, -1)}
    branches = {}
    for s in itertools.product((1, -1), repeat=n):
        op = np.array([[1.0]])
        for q in s:
            op = np.kron(op, proj[q])
        branches[s] = op @ psi
    rho = np.zeros((2 ** n, 2 ** n), dtype=complex)
    for s, a in branches.items():
        for t, b in branches.items():
            k = np.array(s) - np.array(t)
            rho += math.exp(-0.5 * k @ cov @ k) * np.outer(a, b.conj())
    return rho


@pytest.mark.parametrize("which", ["sigma1", "sigma2", "random"])
def test_quadrature_matches_characteristic_function(which):
    if which == "sigma1":
        Sigma = np.eye(4) / 0.1 ** 2
    elif which == "sigma2":
        Sigma = np.array(sigma2_matrix())
    else:
        rng = np.random.default_rng(4)
        a = rng.standard_normal((4, 4))
        Sigma = a @ a.T + 2 * np.eye(4)
    psi = bell_pair_state()
    rho = noisy_density_matrix(Sigma, 32, psi)
    assert np.max(np.abs(rho - analytic_rho(Sigma, psi))) < 1e-12


def test_bell_and_product_states():
    bell = DenseState.from_vector(bell_pair_state([(0, 1)], 2))
    assert qubit_log_negativity(bell, [0]) == pytest.approx(1.0, abs=1e-12)
    prod = np.zeros(4)
    prod[0] = 1
    assert qubit_log_negativity(DenseState.from_vector(prod), [0]) == 0.0
    two = DenseState.from_vector(bell_pair_state())
    assert qubit_log_negativity(two, A_QUBITS) == pytest.approx(2.0, abs=1e-12)
    for a, b in BELL_PAIRS:
        assert (a in A_QUBITS) != (b in A_QUBITS)


def test_noiseless_limit():
    rep = correlated_noise_negativity(np.eye(4) * 1e12, 16)
    assert rep.total == pytest.approx(2.0, abs=1e-6)
    assert rep.two_body_sum == pytest.approx(2.0, abs=1e-6)


def test_partial_transposes_are_related_by_full_transpose():
    rng = np.random.default_rng(1)
    v = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    st = DenseState.from_vector(v)
    assert np.allclose(partial_transpose(st, [2]), partial_transpose(st, [0, 1]).T)
    assert np.allclose(partial_transpose(st, [0, 1, 2]), st.rho.T)


def test_ghz_extraction():
    rep = ghz_extraction_check()
    assert rep.ok
    assert abs(rep.traced_pair_negativity) < 1e-12
    assert rep.conditioned_negativity[0] == pytest.approx(1.0, abs=1e-12)
    assert rep.conditioned_negativity[1] == pytest.approx(1.0, abs=1e-12)
    assert rep.outcome_probability[0] == pytest.approx(0.5)


def test_low_order_warns():
    with pytest.warns(QuadratureAccuracyWarning):
        rep = correlated_noise_negativity(np.eye(4) * 100, 4)
    assert rep.warnings


def test_dense_state_validation():
    with pytest.raises(ValueError):
        DenseState(2, np.eye(3))
    with pytest.raises(ValueError):
        DenseState(1, np.eye(2))
    with pytest.raises(ValueError):
        DenseState(1, np.diag([1.5, -0.5]))
    with pytest.raises(ValueError):
        DenseState(7, np.eye(128) / 128)
    red = DenseState.from_vector(bell_pair_state()).reduce([0, 3])
    assert qubit_log_negativity(red, [0]) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        qubit_log_negativity(red, [0, 1])


def test_sigma_validation():
    with pytest.raises(ValueError):
        noisy_density_matrix(np.array([[1.0, 2.0], [0.0, 1.0]]), 8)
    with pytest.raises(ValueError):
        noisy_density_matrix(-np.eye(2), 8)


def test_quadrature_order_convergence():
    Sigma = np.array(sigma2_matrix())
    a = correlated_noise_negativity(Sigma, 32)
    b = correlated_noise_negativity(Sigma, 48)
    assert abs(a.total - b.total) < 1e-10 and abs(a.two_body_sum - b.two_body_sum) < 1e-10
