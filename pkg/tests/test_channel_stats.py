import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simstack import channel_stats as cs
from simstack import geometry as geo
from simstack import propagation as prop
from simstack.config import SystemConfig, desk_scale
from simstack.rng import complex_normal, stream
from simstack.scenario import Scenario

WL = 0.15


def test_correlation_unit_diagonal():
    grid = geo.GridLayout(3, 3, WL / 2)
    r = cs.correlation_matrix(grid, WL)
    assert np.allclose(np.diag(r.entries), 1.0)
    assert np.allclose(r.entries, r.entries.T)


def test_correlation_adjacent_half_wavelength_is_zero():
    grid = geo.GridLayout(3, 1, WL / 2)
    r = cs.correlation_matrix(grid, WL)
    # same-row neighbors sit at lambda/2: sinc(1) = 0
    assert r.entries[0, 1] == pytest.approx(0.0, abs=1e-15)


def test_correlation_quarter_wavelength_value():
    grid = geo.GridLayout(3, 1, WL / 4)
    r = cs.correlation_matrix(grid, WL)
    assert r.entries[0, 1] == pytest.approx(2 / np.pi, rel=1e-12)


def test_correlation_psd_after_clamp():
    grid = geo.GridLayout(7, 7, WL / 2)
    r = cs.correlation_matrix(grid, WL)
    eig = np.linalg.eigvalsh(r.entries)
    assert eig.min() >= -1e-10
    assert r.psd_floor >= 0.0


# ---- psd_sqrt ---------------------------------------------------------------

def test_psd_sqrt_identity():
    assert np.allclose(cs.psd_sqrt(np.eye(4)), np.eye(4))


def test_psd_sqrt_diagonal():
    got = cs.psd_sqrt(np.diag([4.0, 1.0]))
    assert np.allclose(got, np.diag([2.0, 1.0]))


def test_psd_sqrt_residual():
    rng = stream(3, "psd")
    a = complex_normal(rng, (9, 9))
    mat = a @ a.conj().T
    root = cs.psd_sqrt(mat)
    resid = np.linalg.norm(root @ root.conj().T - mat) / np.linalg.norm(mat)
    assert resid <= 1e-8
    # the root itself is Hermitian PSD
    assert np.allclose(root, root.conj().T)


def test_psd_sqrt_rejects_indefinite():
    with pytest.raises(ValueError, match="PSD"):
        cs.psd_sqrt(np.diag([1.0, -0.5]))


def test_psd_sqrt_rejects_non_hermitian():
    with pytest.raises(ValueError, match="Hermitian"):
        cs.psd_sqrt(np.array([[1.0, 2.0], [0.0, 1.0]]))


# ---- path losses -------------------------------------------------------------

def _distances(k=2):
    layout = geo.ScenarioLayout(10.0, (50.0, 10.0), 20.0, k, 4)
    return geo.scenario_distances(layout)


def test_path_loss_reference_distance():
    cfg = SystemConfig(bs_gain_dbi=0.0, user_gain_dbi=0.0)
    d = geo.ScenarioDistances(1.0, np.array([1.0]), np.array([1.0]),
                              np.zeros((1, 2)))
    losses = cs.path_losses(d, cfg)
    assert losses.beta_g == pytest.approx(cfg.c0)
    assert losses.beta_tilde[0] == pytest.approx(cfg.c0)
    assert losses.beta_bar[0] == pytest.approx(cfg.c0)


def test_path_loss_default_exponents_and_gains():
    cfg = SystemConfig()
    losses = cs.path_losses(_distances(4), cfg)
    assert losses.exponents == (2.0, 2.8, 3.5)
    # all physical gains lie in (0, 1]
    for value in (losses.beta_g, *losses.beta_tilde, *losses.beta_bar):
        assert 0.0 < value <= 1.0
    # cascaded gain identity holds exactly
    assert np.array_equal(losses.beta_hat, losses.beta_g * losses.beta_tilde)


def test_path_loss_blockage_attenuates_direct_link():
    base = cs.path_losses(_distances(), SystemConfig())
    blocked = cs.path_losses(_distances(), SystemConfig(direct_blockage_db=20.0))
    assert np.allclose(blocked.beta_bar, base.beta_bar * 1e-2)
    assert blocked.beta_g == base.beta_g


def test_path_loss_rejects_nonpositive_distance():
    cfg = SystemConfig()
    d = geo.ScenarioDistances(0.0, np.array([1.0]), np.array([1.0]),
                              np.zeros((1, 2)))
    with pytest.raises(ValueError):
        cs.path_losses(d, cfg)


def test_c0_override():
    cfg = SystemConfig(c0_override=1e-3)
    assert cfg.c0 == 1e-3


# ---- covariances -------------------------------------------------------------

def fixture_scenario(**kw):
    return Scenario(desk_scale(num_users=2, **kw).scenario)


def test_trace_factor_identity_csim():
    sc = fixture_scenario()
    r_c = sc.r_csim.entries
    t = cs.csim_trace_factor(r_c, np.eye(r_c.shape[0]))
    assert t == pytest.approx(np.linalg.norm(r_c) ** 2, rel=1e-12)


def test_trace_factor_nonnegative_for_random_profiles():
    sc = fixture_scenario()
    for i in range(5):
        profile = sc.random_profile(stream(6, "tf", i))
        z = prop.csim_response(sc.stack, profile).matrix
        assert cs.csim_trace_factor(sc.r_csim.entries, z) >= 0.0


def test_aggregate_covariance_direct_only():
    sc = fixture_scenario()
    losses = cs.PathLossSet(
        beta_g=0.0, beta_tilde=np.zeros(2), beta_bar=np.array([0.5, 0.25]),
        beta_hat=np.zeros(2), c0=1.0, exponents=(2.0, 2.8, 3.5),
    )
    z = np.eye(sc.config.n)
    r_0 = cs.aggregate_covariance(sc.r_bsim.entries, sc.r_csim.entries, z, losses, 0)
    assert np.allclose(r_0, 0.5 * sc.r_bsim.entries)


def test_effective_covariance_zero_channel():
    v = complex_normal(stream(1, "v"), (9, 4))
    r_hat, q = cs.effective_covariance(np.zeros((9, 9)), v, tau_rho=4.0)
    assert np.allclose(r_hat, 0.0)
    assert np.allclose(q, 4.0 * np.eye(4))


def test_effective_covariance_inverse_residual():
    sc = fixture_scenario()
    profile = sc.random_profile(stream(2, "ec"))
    stats = sc.statistics(profile)
    tau_rho = sc.config.pilot_length * sc.rho_pilot
    for k in range(2):
        resid = stats.q[k] @ (stats.r_hat[k] + np.eye(sc.config.m_bs) / tau_rho)
        assert np.abs(resid - np.eye(sc.config.m_bs)).max() <= 1e-10


def test_draw_channels_identities():
    sc = fixture_scenario()
    profile = sc.random_profile(stream(3, "draw"))
    stats = sc.statistics(profile)
    real = cs.draw_channels(
        stream(4, "draw"), sc.r_bsim_sqrt, sc.r_csim_sqrt, sc.losses,
        stats.z, stats.p, sc.stack.w1,
    )
    for k in range(2):
        h_expect = real.g @ (stats.z @ real.q[k]) + real.d[k]
        assert np.allclose(real.h[k], h_expect)
        assert np.allclose(real.c[k], stats.v.conj().T @ real.h[k])


def test_draws_reproducible_per_seed():
    sc = fixture_scenario()
    profile = sc.random_profile(stream(3, "draw"))
    stats = sc.statistics(profile)
    args = (sc.r_bsim_sqrt, sc.r_csim_sqrt, sc.losses, stats.z, stats.p, sc.stack.w1)
    a = cs.draw_channels(stream(9, "rep"), *args)
    b = cs.draw_channels(stream(9, "rep"), *args)
    assert np.array_equal(a.h, b.h)
    c = cs.draw_channels(stream(10, "rep"), *args)
    assert not np.allclose(a.h, c.h)


def test_zero_variance_stub_gives_zero_channel():
    class ZeroRng:
        def standard_normal(self, shape):
            return np.zeros(shape)

    sc = fixture_scenario()
    profile = sc.random_profile(stream(3, "draw"))
    stats = sc.statistics(profile)
    real = cs.draw_channels(
        ZeroRng(), sc.r_bsim_sqrt, sc.r_csim_sqrt, sc.losses,
        stats.z, stats.p, sc.stack.w1,
    )
    assert np.allclose(real.h, 0.0)


def test_channel_mean_is_zero():
    sc = fixture_scenario()
    profile = sc.random_profile(stream(3, "draw"))
    stats = sc.statistics(profile)
    trials = 20_000
    _, _, _, h, _ = cs.draw_channel_batch(
        stream(11, "mean"), sc.r_bsim_sqrt, sc.r_csim_sqrt, sc.losses,
        stats.z, stats.p, sc.stack.w1, trials=trials,
    )
    mean = h.mean(axis=0)
    scale = np.sqrt(stats.gains[:, None] / trials)  # per-entry std of the mean
    assert np.all(np.abs(mean) <= 5 * scale)


def test_empirical_covariance_matches_model():
    # reduced-size version of the Monte Carlo covariance oracle
    sc = fixture_scenario()
    profile = sc.random_profile(stream(3, "cov"))
    stats = sc.statistics(profile)
    trials = 40_000
    _, _, _, h, c = cs.draw_channel_batch(
        stream(12, "cov"), sc.r_bsim_sqrt, sc.r_csim_sqrt, sc.losses,
        stats.z, stats.p, sc.stack.w1, trials=trials,
    )
    for k in range(2):
        emp = np.einsum("ti,tj->ij", h[:, k], h[:, k].conj()) / trials
        r_k = stats.gains[k] * sc.r_bsim.entries
        assert np.linalg.norm(emp - r_k) / np.linalg.norm(r_k) <= 0.05
        emp_c = np.einsum("ti,tj->ij", c[:, k], c[:, k].conj()) / trials
        assert (np.linalg.norm(emp_c - stats.r_hat[k])
                / np.linalg.norm(stats.r_hat[k])) <= 0.05
