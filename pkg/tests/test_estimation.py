import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simstack import estimation as est
from simstack.rng import complex_normal, stream


class ZeroRng:
    def standard_normal(self, shape):
        return np.zeros(shape)


@given(st.integers(1, 6), st.integers(0, 8))
def test_dft_pilots_orthogonal(k, extra):
    tau = k + extra
    pilots = est.dft_pilots(tau, k, rho=2.5)
    gram = pilots.matrix.conj().T @ pilots.matrix
    assert np.allclose(gram, tau * 2.5 * np.eye(k), atol=1e-10)


def test_pilots_reject_short_tau():
    with pytest.raises(ValueError):
        est.dft_pilots(2, 4, 1.0)


def test_pilot_config_rejects_nonorthogonal():
    bad = np.ones((4, 2), dtype=complex)
    with pytest.raises(ValueError, match="orthogonal"):
        est.PilotConfig(tau=4, rho=1.0, matrix=bad)


def test_noise_free_rx_recovers_channel():
    pilots = est.dft_pilots(4, 2, rho=3.0)
    c = complex_normal(stream(0, "rx"), (2, 5))
    r = est.simulate_pilot_rx(c, pilots, ZeroRng())
    assert np.allclose(r, c, atol=1e-12)


def test_orthogonality_removes_other_users():
    pilots = est.dft_pilots(2, 2, rho=1.0)
    c = np.zeros((2, 3), dtype=complex)
    c[1] = 7.0 + 1.0j  # only user 2 transmits energy
    r = est.simulate_pilot_rx(c, pilots, ZeroRng())
    assert np.abs(r[0]).max() <= 1e-12
    assert np.allclose(r[1], c[1])


def test_noise_only_rx_variance():
    pilots = est.dft_pilots(2, 2, rho=2.0)
    m_bs = 6
    trials = 10_000
    c = np.zeros((trials, 2, m_bs), dtype=complex)
    r = est.simulate_pilot_rx(c, pilots, stream(5, "noise"))
    power = np.mean(np.sum(np.abs(r[:, 0, :]) ** 2, axis=1))
    expect = m_bs / (pilots.tau * pilots.rho)
    assert power == pytest.approx(expect, rel=0.05)


def _random_psd(rng, n, scale=1.0):
    a = complex_normal(rng, (n, n))
    return scale * (a @ a.conj().T) / n


def test_lmmse_high_snr_limit():
    rng = stream(1, "lmmse")
    r_hat = _random_psd(rng, 4) + 0.5 * np.eye(4)  # invertible
    tau_rho = 1e12
    q = np.linalg.inv(r_hat + np.eye(4) / tau_rho)
    r_obs = complex_normal(rng, (4,))
    c_hat = est.lmmse_estimate(r_obs, r_hat, q)
    assert np.linalg.norm(c_hat - r_obs) / np.linalg.norm(r_obs) <= 1e-4


def test_lmmse_zero_prior():
    r_obs = complex_normal(stream(2, "lmmse"), (4,))
    r_hat = np.zeros((4, 4))
    q = np.linalg.inv(r_hat + np.eye(4) * 2.0)
    assert np.allclose(est.lmmse_estimate(r_obs, r_hat, q), 0.0)


def test_covariance_split_hand_value():
    # identity prior at unit pilot energy: estimate and error split evenly
    r_hat = np.eye(2)
    q = np.linalg.inv(r_hat + np.eye(2))
    psi, psi_tilde = est.estimate_covariances(r_hat, q)
    assert np.allclose(psi, 0.5 * np.eye(2))
    assert np.allclose(psi_tilde, 0.5 * np.eye(2))


def test_covariance_split_exact_identity():
    rng = stream(3, "split")
    r_hat = _random_psd(rng, 5)
    q = np.linalg.inv(r_hat + np.eye(5) / 3.7)
    psi, psi_tilde = est.estimate_covariances(r_hat, q)
    assert np.array_equal(psi + psi_tilde, r_hat)  # exact by construction
    assert np.linalg.eigvalsh(psi).min() >= -1e-12
    assert np.linalg.eigvalsh(psi_tilde).min() >= -1e-12


def test_covariance_high_snr_limit():
    rng = stream(4, "split")
    r_hat = _random_psd(rng, 4)
    q = np.linalg.inv(r_hat + np.eye(4) / 1e12)
    psi, psi_tilde = est.estimate_covariances(r_hat, q)
    assert np.linalg.norm(psi - r_hat) / np.linalg.norm(r_hat) <= 1e-9
    assert np.linalg.norm(psi_tilde) / np.linalg.norm(r_hat) <= 1e-9


def test_mmse_orthogonality_monte_carlo():
    # sample cross-covariance of estimate and error is (near) zero
    rng = stream(6, "orth")
    m_bs = 4
    r_hat = _random_psd(rng, m_bs, scale=2.0)
    tau, rho = 2, 1.5
    q = np.linalg.inv(r_hat + np.eye(m_bs) / (tau * rho))
    psi, _ = est.estimate_covariances(r_hat, q)
    root = np.linalg.cholesky(r_hat + 1e-12 * np.eye(m_bs))
    trials = 30_000
    c = complex_normal(rng, (trials, m_bs)) @ root.conj().T
    noise = complex_normal(rng, (trials, m_bs)) / np.sqrt(tau * rho)
    c_hat = est.lmmse_estimate(c + noise, r_hat, q)
    cross = np.einsum("ti,tj->ij", c_hat, (c - c_hat).conj()) / trials
    assert np.linalg.norm(cross) <= 0.05 * np.linalg.norm(psi)


def test_nmse_bounds_and_values():
    r_hat = np.eye(2)
    q = np.linalg.inv(r_hat + np.eye(2))  # tau rho = 1
    psi, _ = est.estimate_covariances(r_hat, q)
    assert est.nmse(psi, r_hat) == pytest.approx(0.5)
    assert est.nmse(r_hat, r_hat) == pytest.approx(0.0)
    assert est.nmse(np.zeros((2, 2)), r_hat) == pytest.approx(1.0)


def test_nmse_rejects_zero_trace():
    with pytest.raises(ValueError):
        est.nmse(np.zeros((2, 2)), np.zeros((2, 2)))


@given(st.floats(-10.0, 30.0), st.floats(-10.0, 30.0))
@settings(max_examples=25, deadline=None)
def test_nmse_in_unit_interval_and_monotone(snr_a, snr_b):
    rng = stream(8, "nmse")
    r_hat = _random_psd(rng, 4)
    out = []
    for snr in (snr_a, snr_b):
        tau_rho = 2 * 10 ** (snr / 10)
        q = np.linalg.inv(r_hat + np.eye(4) / tau_rho)
        psi, _ = est.estimate_covariances(r_hat, q)
        value = est.nmse(psi, r_hat)
        assert -1e-12 <= value <= 1.0
        out.append(value)
    if snr_a <= snr_b:
        assert out[0] >= out[1] - 1e-12
    else:
        assert out[1] >= out[0] - 1e-12
