"""Pilot transmission and the closed-form LMMSE channel estimator.

Users send mutually orthogonal pilots of length tau with per-symbol SNR rho;
correlating the received block with user k's pilot leaves

    r_k = c_k + z_k / (tau rho),      cov(z_k / (tau rho)) = I / (tau rho),

and the LMMSE estimate of the digital-domain channel is c^_k = R^_k Q_k r_k
with estimate/error covariances Psi_k = R^_k Q_k R^_k and
Psi~_k = R^_k - Psi_k.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import complex_normal

__all__ = [
    "PilotConfig",
    "EstimationOutput",
    "dft_pilots",
    "simulate_pilot_rx",
    "lmmse_estimate",
    "estimate_covariances",
    "nmse",
]


@dataclass(frozen=True)
class PilotConfig:
    tau: int
    rho: float
    matrix: np.ndarray  # (tau, K), columns x_k with x_k^H x_k = tau * rho

    def __post_init__(self):
        tau, k = self.matrix.shape
        if tau != self.tau:
            raise ValueError("pilot matrix row count must equal tau")
        if tau < k:
            raise ValueError("tau must be >= number of users")
        gram = self.matrix.conj().T @ self.matrix
        target = self.tau * self.rho * np.eye(k)
        if not np.allclose(gram, target, rtol=1e-9, atol=1e-9 * self.tau * self.rho):
            raise ValueError("pilot columns must be orthogonal with norm tau*rho")


@dataclass(frozen=True)
class EstimationOutput:
    c_hat: np.ndarray       # (K, M_BS)
    psi: np.ndarray         # (K, M_BS, M_BS)
    psi_tilde: np.ndarray   # (K, M_BS, M_BS)
    r: np.ndarray           # (K, M_BS) processed observations


def dft_pilots(tau: int, num_users: int, rho: float) -> PilotConfig:
    """Scaled DFT columns: exactly orthogonal for any tau >= num_users."""
    if tau < num_users:
        raise ValueError("tau must be >= num_users")
    t = np.arange(tau)[:, None]
    k = np.arange(num_users)[None, :]
    matrix = np.sqrt(rho) * np.exp(-2j * np.pi * t * k / tau)
    return PilotConfig(tau=tau, rho=rho, matrix=matrix)


def simulate_pilot_rx(
    c: np.ndarray, pilots: PilotConfig, rng: np.random.Generator
) -> np.ndarray:
    """Pilot-phase observations r_k for all users.

    c has shape (K, M_BS) or batched (T, K, M_BS); the return matches.  The
    received block is sum_i c_i x_i^H plus white noise; orthogonality removes
    the inter-user terms exactly.
    """
    c = np.asarray(c)
    batched = c.ndim == 3
    cb = c if batched else c[None]
    t_trials, k, m_bs = cb.shape
    tau = pilots.tau

    noise = complex_normal(rng, (t_trials, m_bs, tau))
    # Y = sum_i c_i x_i^H + Z;  r_k = Y x_k / (tau rho)
    y = np.einsum("tkm,sk->tms", cb, pilots.matrix.conj(), optimize=True) + noise
    r = np.einsum("tms,sk->tkm", y, pilots.matrix, optimize=True) / (tau * pilots.rho)
    return r if batched else r[0]


def lmmse_estimate(r_k: np.ndarray, r_hat_k: np.ndarray, q_k: np.ndarray) -> np.ndarray:
    """c^_k = R^_k Q_k r_k; r_k may be batched with trailing channel axis."""
    gain = r_hat_k @ q_k
    return np.einsum("bm,...m->...b", gain, r_k, optimize=True)


def estimate_covariances(
    r_hat_k: np.ndarray, q_k: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Estimate covariance Psi_k and error covariance Psi~_k = R^_k - Psi_k."""
    psi = r_hat_k @ q_k @ r_hat_k
    psi = 0.5 * (psi + psi.conj().T)
    return psi, r_hat_k - psi


def nmse(psi_k: np.ndarray, r_hat_k: np.ndarray) -> float:
    """Normalized estimation MSE: 1 - tr(Psi_k) / tr(R^_k), in [0, 1]."""
    denom = float(np.trace(r_hat_k).real)
    if denom <= 0.0:
        raise ValueError("tr(R^_k) must be positive for the NMSE to be defined")
    return 1.0 - float(np.trace(psi_k).real) / denom
