"""Scenario assembly: geometry, stacks, statistics, and SNR normalization.

A Scenario is built once per configuration.  It owns everything that does not
depend on the phase shifts (transmission matrices, correlation matrices and
their square roots, path losses, pilots) and produces, for any phase profile,
the per-user second-order statistics the estimator and the spectral
efficiency run on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import channel_stats as cs
from . import estimation as est
from . import geometry as geo
from . import propagation as prop
from .config import SystemConfig

__all__ = ["Scenario", "ChannelStatistics"]


@dataclass(frozen=True)
class ChannelStatistics:
    """Everything Theorem-style closed forms need, for one phase profile."""

    p: np.ndarray            # (M, M) BS-stack response
    z: np.ndarray            # (N, N) environment-stack response
    v: np.ndarray            # (M, M_BS) effective combining map P @ W1
    trace_factor: float      # tr(R_csim Z R_csim Z^H)
    gains: np.ndarray        # (K,) aggregated covariance scales a_k
    r_hat_base: np.ndarray   # (M_BS, M_BS) V^H R_bsim V
    r_hat: np.ndarray        # (K, M_BS, M_BS)
    q: np.ndarray            # (K, M_BS, M_BS)
    psi: np.ndarray          # (K, M_BS, M_BS) estimate covariances
    psi_tilde: np.ndarray    # (K, M_BS, M_BS) error covariances


class Scenario:
    """Immutable per-configuration state; statistics() is pure.

    reference_gain_override pins the SNR normalization scale to another
    scenario's (sweeps vary the geometry but must keep one SNR anchor so
    aperture gains show up in the results instead of being renormalized
    away).
    """

    def __init__(self, config: SystemConfig, reference_gain_override: float | None = None):
        self.config = config
        wl = config.wavelength

        self.bsim_grid = geo.GridLayout(config.m_x, config.m_y, config.atom_pitch)
        self.csim_grid = geo.GridLayout(config.n_x, config.n_y, config.atom_pitch)
        self.bsim_geometry = geo.StackGeometry(
            config.bsim_layers, config.sim_thickness, self.bsim_grid
        )
        self.csim_geometry = geo.StackGeometry(
            config.csim_layers, config.sim_thickness, self.csim_grid
        )
        self.layout = geo.ScenarioLayout(
            bs_height=config.bs_height_m,
            csim_position=(config.csim_x_m, config.csim_y_m),
            user_span=config.user_span_m,
            user_count=config.num_users,
            bs_antenna_count=config.m_bs,
        )

        self.stack = prop.build_sim_stack(
            self.bsim_geometry, self.csim_geometry, self.layout, wl,
            atom_area=config.atom_area,
        )
        self.r_bsim = cs.correlation_matrix(self.bsim_grid, wl)
        self.r_csim = cs.correlation_matrix(self.csim_grid, wl)
        self.r_bsim_sqrt = cs.psd_sqrt(self.r_bsim.entries)
        self.r_csim_sqrt = cs.psd_sqrt(self.r_csim.entries)

        self.distances = geo.scenario_distances(self.layout)
        self.losses = cs.path_losses(self.distances, config)

        if reference_gain_override is not None:
            self.reference_gain = float(reference_gain_override)
        else:
            self.reference_gain = self._reference_gain()
        if config.snr_reference == "strongest_user":
            self.rho_pilot = config.rho_pilot / self.reference_gain
            self.rho_data = config.rho_data / self.reference_gain
        else:
            self.rho_pilot = config.rho_pilot
            self.rho_data = config.rho_data

        self.pilots = est.dft_pilots(
            config.pilot_length, config.num_users, self.rho_pilot
        )

    # ------------------------------------------------------------------

    def _reference_gain(self) -> float:
        """Mean per-antenna received power of the strongest user at the
        all-zero phase profile; the 'strongest_user' SNR convention divides
        the configured SNRs by this scale so they are measured after the
        physical path loss and stack attenuation."""
        zero = prop.PhaseProfile.zeros(
            self.config.bsim_layers, self.config.m,
            self.config.csim_layers, self.config.n,
        )
        p0 = prop._p_matrix(self.stack, zero.phi())
        z0 = prop._z_matrix(self.stack, zero.lam())
        v0 = p0 @ self.stack.w1
        t0 = cs.csim_trace_factor(self.r_csim.entries, z0)
        gains0 = self.losses.beta_hat * t0 + self.losses.beta_bar
        base_tr = float(
            np.trace(v0.conj().T @ self.r_bsim.entries @ v0).real
        )
        return float(gains0.max()) * base_tr / self.config.m_bs

    def zero_profile(self) -> prop.PhaseProfile:
        return prop.PhaseProfile.zeros(
            self.config.bsim_layers, self.config.m,
            self.config.csim_layers, self.config.n,
        )

    def random_profile(self, rng: np.random.Generator) -> prop.PhaseProfile:
        return prop.PhaseProfile.random(
            rng,
            self.config.bsim_layers, self.config.m,
            self.config.csim_layers, self.config.n,
        )

    # ------------------------------------------------------------------

    def statistics_from_coeffs(self, phi: np.ndarray, lam: np.ndarray) -> ChannelStatistics:
        """Second-order statistics for raw unit-modulus coefficient arrays."""
        cfg = self.config
        p = prop._p_matrix(self.stack, phi)
        z = prop._z_matrix(self.stack, lam)
        v = p @ self.stack.w1
        t = cs.csim_trace_factor(self.r_csim.entries, z)
        gains = self.losses.beta_hat * t + self.losses.beta_bar

        r_hat_base = v.conj().T @ self.r_bsim.entries @ v
        r_hat_base = 0.5 * (r_hat_base + r_hat_base.conj().T)

        m_bs = cfg.m_bs
        tau_rho = cfg.pilot_length * self.rho_pilot
        eye = np.eye(m_bs)
        k = cfg.num_users
        r_hat = np.empty((k, m_bs, m_bs), dtype=complex)
        q = np.empty_like(r_hat)
        psi = np.empty_like(r_hat)
        psi_tilde = np.empty_like(r_hat)
        for i in range(k):
            r_hat[i] = gains[i] * r_hat_base
            q_i = np.linalg.inv(r_hat[i] + eye / tau_rho)
            q[i] = 0.5 * (q_i + q_i.conj().T)
            psi[i], psi_tilde[i] = est.estimate_covariances(r_hat[i], q[i])
        return ChannelStatistics(
            p=p, z=z, v=v, trace_factor=t, gains=gains,
            r_hat_base=r_hat_base, r_hat=r_hat, q=q,
            psi=psi, psi_tilde=psi_tilde,
        )

    def statistics(self, profile: prop.PhaseProfile) -> ChannelStatistics:
        return self.statistics_from_coeffs(profile.phi(), profile.lam())
