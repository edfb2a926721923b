"""Closed-form uplink SINR/SE under MRC and its Monte Carlo oracle.

The closed form uses only second-order statistics: with Psi_k the estimate
covariance and R^_i the effective channel covariances,

    S_k = tr(Psi_k)^2
    I~_k = sum_i tr(R^_i Psi_k) - tr(Psi_k^2) + tr(Psi_k) / rho
    SE_k = (tau_c - tau)/tau_c * log2(1 + S_k / I~_k).

The Monte Carlo routine estimates the same use-and-then-forget SINR from
fresh channel, pilot-noise and data-noise draws with the MRC combiner
v_k = c^_k, normalized identically (the transmit SNR divided through), and is
the validation oracle for the closed form's hardening approximations.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import channel_stats as cs
from . import estimation as est
from .propagation import PhaseProfile
from .rng import complex_normal, stream
from .scenario import ChannelStatistics, Scenario

__all__ = ["SinrBreakdown", "SEReport", "closed_form_sinr", "sum_se", "monte_carlo_sinr"]


@dataclass(frozen=True)
class SinrBreakdown:
    signal: float        # S_k
    interference: float  # I~_k (beamforming uncertainty + multiuser + noise)
    gamma: float

    def __post_init__(self):
        if self.signal < 0:
            raise ValueError("signal power must be nonnegative")


@dataclass(frozen=True)
class SEReport:
    prelog: float
    se_per_user: np.ndarray
    sum_se: float
    mode: str  # "closed_form" or "monte_carlo"


def closed_form_sinr(
    psi: np.ndarray, r_hat: np.ndarray, rho: float, user: int
) -> SinrBreakdown:
    """Hardening-based SINR approximation for one user.

    psi and r_hat are (K, M_BS, M_BS) stacks over users; rho is the data SNR.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    psi_k = psi[user]
    tr_psi = float(np.trace(psi_k).real)
    signal = tr_psi**2
    cross = float(np.einsum("kij,ji->", r_hat, psi_k, optimize=True).real)
    quad = float(np.einsum("ij,ji->", psi_k, psi_k, optimize=True).real)
    interference = cross - quad + tr_psi / rho
    gamma = signal / interference if interference > 0 else 0.0
    return SinrBreakdown(signal=signal, interference=interference, gamma=gamma)


def sum_se(breakdowns, tau: int, tau_c: int, mode: str = "closed_form") -> SEReport:
    """Per-user and sum SE with the pilot-overhead prelog (tau_c - tau)/tau_c."""
    if tau >= tau_c:
        raise ValueError(f"tau = {tau} must be smaller than tau_c = {tau_c}")
    prelog = (tau_c - tau) / tau_c
    gammas = np.array([b.gamma for b in breakdowns])
    se = prelog * np.log2(1.0 + gammas)
    return SEReport(prelog=prelog, se_per_user=se, sum_se=float(se.sum()), mode=mode)


def _mc_chunk(scenario: Scenario, stats: ChannelStatistics, seed: int,
              chunk_index: int, trials: int):
    """Accumulate raw moments over one chunk of trials."""
    rng = stream(seed, "mc-sinr", chunk_index)
    k = scenario.config.num_users
    m_bs = scenario.config.m_bs

    _, _, _, _, c = cs.draw_channel_batch(
        rng, scenario.r_bsim_sqrt, scenario.r_csim_sqrt, scenario.losses,
        stats.z, stats.p, scenario.stack.w1, trials=trials,
    )
    r = est.simulate_pilot_rx(c, scenario.pilots, rng)
    v = np.empty_like(c)
    for i in range(k):
        v[:, i, :] = est.lmmse_estimate(r[:, i, :], stats.r_hat[i], stats.q[i])

    noise = complex_normal(rng, (trials, m_bs))

    inner = np.einsum("tkb,tib->tki", v.conj(), c, optimize=True)  # v_k^H c_i
    s1 = inner[:, np.arange(k), np.arange(k)].sum(axis=0)          # sum over trials
    cross2 = (np.abs(inner) ** 2).sum(axis=0)                      # (k, i)
    vn = np.einsum("tkb,tb->tk", v.conj(), noise, optimize=True)
    nz = (np.abs(vn) ** 2).sum(axis=0)
    return s1, cross2, nz


def monte_carlo_sinr(
    scenario: Scenario,
    profile: PhaseProfile,
    trials: int,
    seed: int,
    chunk_size: int = 512,
    threads: int = 1,
) -> list[SinrBreakdown]:
    """Empirical use-and-then-forget SINR per user.

    Chunked, seeded per chunk, and reduced in fixed chunk order, so the
    result is bit-identical for any thread count.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    stats = scenario.statistics(profile)
    k = scenario.config.num_users

    sizes = [chunk_size] * (trials // chunk_size)
    if trials % chunk_size:
        sizes.append(trials % chunk_size)

    def run(args):
        idx, size = args
        return _mc_chunk(scenario, stats, seed, idx, size)

    jobs = list(enumerate(sizes))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]

    s1 = np.zeros(k, dtype=complex)
    cross2 = np.zeros((k, k))
    nz = np.zeros(k)
    for p_s1, p_cross2, p_nz in parts:
        s1 += p_s1
        cross2 += p_cross2
        nz += p_nz
    s1 /= trials
    cross2 /= trials
    nz /= trials

    out = []
    for u in range(k):
        signal = float(np.abs(s1[u]) ** 2)
        bu = float(cross2[u, u] - signal)
        mui = float(cross2[u].sum() - cross2[u, u])
        interference = bu + mui + nz[u] / scenario.rho_data
        out.append(SinrBreakdown(signal=signal, interference=interference,
                                 gamma=signal / interference))
    return out
