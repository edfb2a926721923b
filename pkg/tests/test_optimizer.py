import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from simstack import Scenario, desk_scale
from simstack import optimizer as opt
from simstack import spectral_efficiency as se
from simstack.propagation import PhaseProfile
from simstack.rng import stream

ZERO_PROFILE_OBJECTIVE = 2.001017270417065  # desk scale, K=2, pinned regression


def disconnect_csim(scenario):
    scenario.losses = dataclasses.replace(
        scenario.losses,
        beta_tilde=np.zeros_like(scenario.losses.beta_tilde),
        beta_hat=np.zeros_like(scenario.losses.beta_hat),
    )
    return scenario


def disconnect_everything(scenario):
    scenario = disconnect_csim(scenario)
    scenario.losses = dataclasses.replace(
        scenario.losses, beta_bar=np.zeros_like(scenario.losses.beta_bar)
    )
    return scenario


# ---- projection ------------------------------------------------------------

def test_projection_examples():
    out = opt.project_unit_modulus(np.array([3 + 4j, 0.0, np.exp(1j * np.pi / 3)]))
    assert out[0] == pytest.approx(0.6 + 0.8j)
    assert out[1] == 1.0 + 0.0j
    assert out[2] == pytest.approx(np.exp(1j * np.pi / 3))


@given(hnp.arrays(np.complex128, st.integers(1, 24),
                  elements=st.complex_numbers(max_magnitude=1e6,
                                              allow_nan=False,
                                              allow_infinity=False)))
@settings(max_examples=60, deadline=None)
def test_projection_unit_modulus_and_idempotent(x):
    p = opt.project_unit_modulus(x)
    assert np.allclose(np.abs(p), 1.0)
    assert np.allclose(opt.project_unit_modulus(p), p)


# ---- objective ---------------------------------------------------------------

def test_objective_zero_profile_regression(desk_scenario):
    value = opt.objective(desk_scenario.zero_profile(), desk_scenario)
    assert value == pytest.approx(ZERO_PROFILE_OBJECTIVE, rel=1e-9)


def test_objective_matches_sum_se(desk_scenario):
    profile = desk_scenario.random_profile(stream(0, "obj"))
    stats = desk_scenario.statistics(profile)
    cfg = desk_scenario.config
    breakdowns = [
        se.closed_form_sinr(stats.psi, stats.r_hat, desk_scenario.rho_data, k)
        for k in range(cfg.num_users)
    ]
    report = se.sum_se(breakdowns, cfg.pilot_length, cfg.tau_c)
    assert opt.objective(profile, desk_scenario) == pytest.approx(
        report.sum_se, rel=1e-12
    )


def test_objective_two_pi_periodic(desk_scenario):
    profile = desk_scenario.random_profile(stream(1, "obj"))
    shifted_bsim = profile.bsim.copy()
    shifted_bsim[0, 3] += 2 * np.pi
    shifted = PhaseProfile(shifted_bsim, profile.csim)
    a = opt.objective(profile, desk_scenario)
    b = opt.objective(shifted, desk_scenario)
    assert b == pytest.approx(a, rel=1e-12)


# ---- gradients ---------------------------------------------------------------

def test_gradient_matches_finite_differences(desk_scenario):
    for i in range(3):
        profile = desk_scenario.random_profile(stream(100 + i, "gradcheck"))
        err = opt.gradient_check(desk_scenario, profile, step=1e-6)
        assert err <= 1e-5


def test_fd_step_halving_second_order(desk_scenario):
    # central differences: truncation error drops ~4x when the step halves
    profile = desk_scenario.random_profile(stream(7, "fd"))
    analytic = opt.grad_phase_shifts(profile, desk_scenario)
    a_theta, _ = opt.angle_gradient(profile, analytic)

    def fd_err(step):
        fd = opt.finite_difference_gradient(profile, desk_scenario, step)
        f_theta, _ = opt.angle_gradient(profile, fd)
        return np.abs(f_theta - a_theta).max()

    e1, e2 = fd_err(2e-3), fd_err(1e-3)
    assert 2.5 <= e1 / e2 <= 6.0


def test_fd_rejects_bad_step(desk_scenario):
    profile = desk_scenario.zero_profile()
    with pytest.raises(ValueError):
        opt.finite_difference_gradient(profile, desk_scenario, step=0.0)


def test_csim_gradient_vanishes_when_disconnected():
    scenario = disconnect_csim(Scenario(desk_scale(num_users=2).scenario))
    profile = scenario.random_profile(stream(2, "grad"))
    pair = opt.grad_phase_shifts(profile, scenario)
    assert np.abs(pair.d_lam).max() == 0.0
    assert np.abs(pair.d_phi).max() > 0.0


def test_small_ascent_step_improves(desk_scenario):
    profile = desk_scenario.random_profile(stream(3, "grad"))
    pair = opt.grad_phase_shifts(profile, desk_scenario)
    f0 = opt.objective(profile, desk_scenario)
    mu = 1e-4 / max(np.abs(pair.d_phi).max(), np.abs(pair.d_lam).max())
    phi = opt.project_unit_modulus(np.exp(1j * profile.bsim) + mu * pair.d_phi)
    lam = opt.project_unit_modulus(np.exp(1j * profile.csim) + mu * pair.d_lam)
    stepped = PhaseProfile(np.angle(phi), np.angle(lam))
    assert opt.objective(stepped, desk_scenario) > f0


# ---- ascent ------------------------------------------------------------------

def test_pgam_monotone_and_terminates(desk_scenario):
    init = desk_scenario.random_profile(stream(4, "pgam"))
    params = opt.LineSearchParams(max_iters=40, mu_growth=2.0)
    final_profile, trace = opt.pgam_optimize(init, desk_scenario, params)
    objectives = np.array(trace.objective)
    assert len(objectives) <= 41
    assert np.all(np.diff(objectives) >= 0)
    assert objectives[-1] > objectives[0]
    # the returned profile reproduces the final trace value
    assert opt.objective(final_profile, desk_scenario) == pytest.approx(
        objectives[-1], rel=1e-9
    )


def test_pgam_stops_on_tolerance(desk_scenario):
    init = desk_scenario.random_profile(stream(5, "pgam"))
    params = opt.LineSearchParams(max_iters=100, tol=1e-1, mu_growth=2.0)
    _, trace = opt.pgam_optimize(init, desk_scenario, params)
    assert len(trace.objective) < 101  # tolerance fired well before the cap


def test_pgam_returns_immediately_at_stationary_point():
    scenario = disconnect_everything(Scenario(desk_scale(num_users=2).scenario))
    init = scenario.random_profile(stream(6, "pgam"))
    profile, trace = opt.pgam_optimize(init, scenario, opt.LineSearchParams())
    assert len(trace.objective) == 1
    assert np.array_equal(profile.bsim, np.angle(np.exp(1j * init.bsim)))


def test_line_search_cap_raises(desk_scenario, monkeypatch):
    init = desk_scenario.random_profile(stream(7, "pgam"))
    f0 = opt.objective(init, desk_scenario)
    monkeypatch.setattr(opt, "_objective_coeffs", lambda *_: f0 - 1.0)
    params = opt.LineSearchParams(max_backtracks=5)
    with pytest.raises(opt.DegenerateGradientError) as err:
        opt.pgam_optimize(init, desk_scenario, params)
    assert "shrinks" in err.value.diagnostics


def test_ao_monotone(desk_scenario):
    init = desk_scenario.random_profile(stream(8, "ao"))
    params = opt.LineSearchParams(max_iters=50, mu_growth=2.0)
    _, trace = opt.ao_optimize(init, desk_scenario, params)
    objectives = np.array(trace.objective)
    assert np.all(np.diff(objectives) >= 0)
    assert objectives[-1] > objectives[0]


def test_ao_reduces_to_pgam_without_csim_branch():
    params = opt.LineSearchParams(max_iters=30, mu_growth=2.0)
    sc_a = disconnect_csim(Scenario(desk_scale(num_users=2).scenario))
    sc_b = disconnect_csim(Scenario(desk_scale(num_users=2).scenario))
    init = sc_a.random_profile(stream(9, "ao"))
    _, trace_pgam = opt.pgam_optimize(init, sc_a, params)
    _, trace_ao = opt.ao_optimize(init, sc_b, params)
    n = min(len(trace_pgam.objective), len(trace_ao.objective))
    assert n > 5
    assert np.allclose(trace_pgam.objective[:n], trace_ao.objective[:n], rtol=1e-7)


def test_multi_start_single_equals_pgam(desk_scenario):
    params = opt.LineSearchParams(max_iters=25, mu_growth=2.0)
    profile, trace, finals = opt.multi_start(
        desk_scenario, params, n_starts=1, seed=21
    )
    init = desk_scenario.random_profile(stream(21, "init", 0))
    ref_profile, ref_trace = opt.pgam_optimize(init, desk_scenario, params)
    assert finals[0] == ref_trace.objective[-1]
    assert np.array_equal(profile.bsim, ref_profile.bsim)


def test_multi_start_returns_best(desk_scenario):
    params = opt.LineSearchParams(max_iters=25, mu_growth=2.0)
    _, trace, finals = opt.multi_start(desk_scenario, params, n_starts=3, seed=22)
    assert trace.objective[-1] == finals.max()
