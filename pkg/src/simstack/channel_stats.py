"""Spatial correlation, path loss, channel covariances, and fading draws.

The aggregated uplink channel of user k at the last BS-stack layer is
h_k = G Z q_k + d_k with correlated-Rayleigh factors

    G   = sqrt(beta_g)      R_bsim^(1/2) D  R_csim^(1/2)
    q_k = sqrt(beta~_k)     R_csim^(1/2) c_k
    d_k = sqrt(beta^bar_k)  R_bsim^(1/2) c^bar_k

and its covariance collapses to a scalar multiple of R_bsim:

    R_k = (beta^_k * tr(R_csim Z R_csim Z^H) + beta^bar_k) R_bsim,

with beta^_k = beta_g beta~_k.  The digital-domain channel is c_k = V^H h_k
through the effective combining map V = P W_1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import GridLayout, ScenarioDistances, intra_layer_offsets
from .rng import complex_normal

__all__ = [
    "CorrelationMatrix",
    "PathLossSet",
    "UserCovariance",
    "ChannelRealization",
    "correlation_matrix",
    "psd_sqrt",
    "path_losses",
    "csim_trace_factor",
    "aggregate_covariance",
    "effective_covariance",
    "draw_channels",
    "draw_channel_batch",
]


@dataclass(frozen=True)
class CorrelationMatrix:
    entries: np.ndarray
    psd_floor: float        # smallest retained eigenvalue after clamping


@dataclass(frozen=True)
class PathLossSet:
    """Distance-dependent link gains (physical, against unit-variance noise).

    beta_hat = beta_g * beta_tilde is the cascaded two-hop gain.  Antenna
    gains are folded in multiplicatively: the BS gain on both BS-terminated
    links, the user gain on both user-terminated links.
    """

    beta_g: float             # BS stack <-> environment stack
    beta_tilde: np.ndarray    # (K,) environment stack <-> user
    beta_bar: np.ndarray      # (K,) BS <-> user, direct
    beta_hat: np.ndarray      # (K,) cascaded product
    c0: float
    exponents: tuple[float, float, float]


@dataclass(frozen=True)
class UserCovariance:
    r_k: np.ndarray       # (M, M) aggregated channel covariance
    r_hat_k: np.ndarray   # (M_BS, M_BS) effective (post-combining) covariance
    q_k: np.ndarray       # (M_BS, M_BS) regularized inverse of r_hat_k


@dataclass(frozen=True)
class ChannelRealization:
    g: np.ndarray    # (M, N)
    q: np.ndarray    # (K, N)
    d: np.ndarray    # (K, M)
    h: np.ndarray    # (K, M) aggregated channel at the last BS-stack layer
    c: np.ndarray    # (K, M_BS) digital-domain channel V^H h


def correlation_matrix(grid: GridLayout, wavelength: float) -> CorrelationMatrix:
    """sinc-law spatial correlation over the atom grid, clamped to PSD.

    Entry (m, m~) is sinc(2 r / lambda) with r the intra-layer offset and
    sinc the normalized sin(pi x)/(pi x).  Floating-point eigenvalues of the
    sampled kernel can dip a hair below zero; those are clamped.
    """
    r = intra_layer_offsets(grid)
    mat = np.sinc(2.0 * r / wavelength)
    eigvals, eigvecs = np.linalg.eigh(mat)
    lam_max = float(eigvals.max())
    if eigvals.min() < -1e-10 * max(lam_max, 1.0):
        raise ValueError(
            f"correlation matrix has a significantly negative eigenvalue "
            f"({eigvals.min():.3e})"
        )
    floor = 1e-12 * lam_max
    clamped = np.where(eigvals < floor, 0.0, eigvals)
    repaired = (eigvecs * clamped) @ eigvecs.T
    # keep the exact unit diagonal and symmetry of the model
    repaired = 0.5 * (repaired + repaired.T)
    np.fill_diagonal(repaired, 1.0)
    kept = clamped[clamped > 0.0]
    return CorrelationMatrix(repaired, float(kept.min()) if kept.size else 0.0)


def psd_sqrt(matrix: np.ndarray, rel_floor: float = 1e-12) -> np.ndarray:
    """Hermitian PSD square root via eigendecomposition.

    Eigenvalues below rel_floor * lambda_max are zeroed; an eigenvalue below
    -1e-8 * lambda_max means the input is not PSD and raises ValueError.
    """
    matrix = np.asarray(matrix)
    herm_gap = np.abs(matrix - matrix.conj().T).max() if matrix.size else 0.0
    if herm_gap > 1e-10 * max(1.0, np.abs(matrix).max()):
        raise ValueError("input is not Hermitian")
    eigvals, eigvecs = np.linalg.eigh(matrix)
    lam_max = float(eigvals.max()) if eigvals.size else 0.0
    if lam_max <= 0.0:
        if np.all(np.abs(eigvals) <= 0.0):
            return np.zeros_like(matrix)
        lam_max = float(np.abs(eigvals).max())
    if eigvals.min() < -1e-8 * lam_max:
        raise ValueError(f"matrix is not PSD (eigenvalue {eigvals.min():.3e})")
    clamped = np.where(eigvals < rel_floor * lam_max, 0.0, eigvals)
    return (eigvecs * np.sqrt(clamped)) @ eigvecs.conj().T


def path_losses(distances: ScenarioDistances, config) -> PathLossSet:
    """Link gains beta = C0 g (d / 1m)^(-alpha) for all scenario links."""
    d_g = distances.bsim_csim
    d_tilde = np.asarray(distances.csim_user, dtype=float)
    d_bar = np.asarray(distances.bs_user, dtype=float)
    if d_g <= 0 or np.any(d_tilde <= 0) or np.any(d_bar <= 0):
        raise ValueError("link distances must be positive")

    c0 = config.c0
    gain_bs = 10.0 ** (config.bs_gain_dbi / 10.0)
    gain_user = 10.0 ** (config.user_gain_dbi / 10.0)

    beta_g = c0 * gain_bs * d_g ** (-config.alpha_bsim_csim)
    beta_tilde = c0 * gain_user * d_tilde ** (-config.alpha_csim_user)
    blockage = 10.0 ** (-config.direct_blockage_db / 10.0)
    beta_bar = blockage * c0 * gain_bs * gain_user * d_bar ** (-config.alpha_bs_user)
    return PathLossSet(
        beta_g=float(beta_g),
        beta_tilde=beta_tilde,
        beta_bar=beta_bar,
        beta_hat=float(beta_g) * beta_tilde,
        c0=c0,
        exponents=(config.alpha_bsim_csim, config.alpha_csim_user, config.alpha_bs_user),
    )


def csim_trace_factor(r_csim: np.ndarray, z: np.ndarray) -> float:
    """tr(R_csim Z R_csim Z^H), real and nonnegative for PSD R_csim."""
    t = np.einsum("ij,jk,kl,il->", r_csim, z, r_csim, z.conj(), optimize=True)
    return float(t.real)


def aggregate_covariance(
    r_bsim: np.ndarray,
    r_csim: np.ndarray,
    z: np.ndarray,
    losses: PathLossSet,
    user: int,
) -> np.ndarray:
    """Covariance of the aggregated channel h_k (cascaded + direct)."""
    t = csim_trace_factor(r_csim, z)
    scale = losses.beta_hat[user] * t + losses.beta_bar[user]
    return scale * r_bsim


def effective_covariance(
    r_k: np.ndarray, v: np.ndarray, tau_rho: float
) -> tuple[np.ndarray, np.ndarray]:
    """Post-combining covariance R^_k = V^H R_k V and its regularized inverse
    Q_k = (R^_k + I/(tau rho))^(-1); V = P W_1, tau rho the pilot energy."""
    if tau_rho <= 0:
        raise ValueError("tau * rho must be positive")
    r_hat = v.conj().T @ r_k @ v
    r_hat = 0.5 * (r_hat + r_hat.conj().T)
    m_bs = r_hat.shape[0]
    q = np.linalg.inv(r_hat + np.eye(m_bs) / tau_rho)
    q = 0.5 * (q + q.conj().T)
    return r_hat, q


def draw_channels(
    rng: np.random.Generator,
    r_bsim_sqrt: np.ndarray,
    r_csim_sqrt: np.ndarray,
    losses: PathLossSet,
    z: np.ndarray,
    p: np.ndarray,
    w1: np.ndarray,
) -> ChannelRealization:
    """One correlated-Rayleigh realization for all users."""
    g, q, d, h, c = draw_channel_batch(
        rng, r_bsim_sqrt, r_csim_sqrt, losses, z, p, w1, trials=1, keep_g=True
    )
    return ChannelRealization(g=g[0], q=q[0], d=d[0], h=h[0], c=c[0])


def draw_channel_batch(
    rng: np.random.Generator,
    r_bsim_sqrt: np.ndarray,
    r_csim_sqrt: np.ndarray,
    losses: PathLossSet,
    z: np.ndarray,
    p: np.ndarray,
    w1: np.ndarray,
    trials: int,
    keep_g: bool = False,
):
    """Vectorized draws: (T, ...) arrays (g, q, d, h, c); g is None unless kept.

    Draw order is fixed (D, then per-user CSIM fading, then direct fading) so
    a given rng stream always produces the same realizations.
    """
    m = r_bsim_sqrt.shape[0]
    n = r_csim_sqrt.shape[0]
    k = losses.beta_tilde.shape[0]

    d_iid = complex_normal(rng, (trials, m, n))
    c_csim = complex_normal(rng, (trials, k, n))
    c_bar = complex_normal(rng, (trials, k, m))

    g = np.sqrt(losses.beta_g) * np.einsum(
        "mi,tij,jn->tmn", r_bsim_sqrt, d_iid, r_csim_sqrt, optimize=True
    )
    q = np.sqrt(losses.beta_tilde)[None, :, None] * np.einsum(
        "nj,tkj->tkn", r_csim_sqrt, c_csim, optimize=True
    )
    d = np.sqrt(losses.beta_bar)[None, :, None] * np.einsum(
        "mj,tkj->tkm", r_bsim_sqrt, c_bar, optimize=True
    )
    zq = np.einsum("nj,tkj->tkn", z, q, optimize=True)
    h = np.einsum("tmn,tkn->tkm", g, zq, optimize=True) + d
    v = p @ w1
    c = np.einsum("mb,tkm->tkb", v.conj(), h, optimize=True)
    return (g if keep_g else None), q, d, h, c
