"""Statistical-CSI sum-SE maximization over both stacks' phase shifts.

The objective is the closed-form sum SE as a deterministic function of the
unit-modulus stack coefficients.  Ascent runs simultaneously on both stacks:
a gradient step in the ambient complex space followed by entrywise projection
back onto the unit circle, with Armijo-Goldstein backtracking against the
quadratic model

    Q_mu(x) = f + <grad, x - cur> - ||x - cur||^2 / mu,   <a,b> = 2 Re a^H b.

Candidates are accepted when f(candidate) > Q_mu, which guarantees a
non-decreasing objective because the projection of cur + mu*grad satisfies
<grad, x - cur> >= ||x - cur||^2 / mu.

Gradients are with respect to the conjugated coefficients (the ascent
direction for a real objective of complex variables).  The closed forms
follow from tracing d(sum SE) through the estimate covariances: with
A_k = Q_k R^_k, the sensitivity of tr(X dPsi_k) to dR^_k is
B_k(X) = A_k X - A_k X A_k^H + X A_k^H, and every per-user term collapses
onto a single M x M_BS weight because all users share the covariance
direction R_bsim.  A central-difference oracle over the raw phase angles is
the ground truth the analytic expressions are tested against.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import propagation as prop
from .propagation import PhaseProfile
from .rng import stream
from .scenario import Scenario
from .spectral_efficiency import closed_form_sinr, sum_se

__all__ = [
    "GradientPair",
    "LineSearchParams",
    "OptimizerTrace",
    "DegenerateGradientError",
    "objective",
    "grad_phase_shifts",
    "finite_difference_gradient",
    "angle_gradient",
    "gradient_check",
    "project_unit_modulus",
    "pgam_optimize",
    "ao_optimize",
    "multi_start",
]

_LOG2E = 1.0 / np.log(2.0)


class DegenerateGradientError(RuntimeError):
    """Backtracking failed to find an ascent step within the shrink cap."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class GradientPair:
    """Conjugate-coordinate gradients for both stacks."""

    d_phi: np.ndarray  # (L, M) complex
    d_lam: np.ndarray  # (S, N) complex


@dataclass(frozen=True)
class LineSearchParams:
    mu_init: float = 1e3
    kappa: float = 0.5
    max_iters: int = 100
    tol: float = 1e-5
    mu_growth: float = 1.0   # optional re-expansion on first-try accepts
    max_backtracks: int = 60

    def __post_init__(self):
        if not (0.0 < self.kappa < 1.0):
            raise ValueError("kappa must lie in (0, 1)")
        if self.mu_init <= 0 or self.max_iters < 1 or self.tol < 0:
            raise ValueError("invalid line-search parameters")


@dataclass
class OptimizerTrace:
    objective: list = field(default_factory=list)  # one entry per iterate, incl. start
    mu: list = field(default_factory=list)
    backtracks: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    wall_time: float = 0.0


# ---------------------------------------------------------------------------
# objective and gradients
# ---------------------------------------------------------------------------

def _objective_from_stats(scenario: Scenario, stats) -> float:
    cfg = scenario.config
    breakdowns = [
        closed_form_sinr(stats.psi, stats.r_hat, scenario.rho_data, k)
        for k in range(cfg.num_users)
    ]
    return sum_se(breakdowns, cfg.pilot_length, cfg.tau_c).sum_se


def _objective_coeffs(scenario: Scenario, phi: np.ndarray, lam: np.ndarray) -> float:
    return _objective_from_stats(scenario, scenario.statistics_from_coeffs(phi, lam))


def objective(profile: PhaseProfile, scenario: Scenario) -> float:
    """Closed-form sum SE (bits/s/Hz) for the given phase profile."""
    return _objective_coeffs(scenario, profile.phi(), profile.lam())


def _grad_coeffs(
    scenario: Scenario,
    phi: np.ndarray,
    lam: np.ndarray,
    want_phi: bool = True,
    want_lam: bool = True,
):
    """Objective value and conjugate-coordinate gradients at (phi, lam)."""
    cfg = scenario.config
    k_users = cfg.num_users
    stats = scenario.statistics_from_coeffs(phi, lam)
    partials = prop._partials(scenario.stack, phi, lam)
    prelog = cfg.prelog
    rho_d = scenario.rho_data

    breakdowns = [
        closed_form_sinr(stats.psi, stats.r_hat, rho_d, k) for k in range(k_users)
    ]
    value = sum_se(breakdowns, cfg.pilot_length, cfg.tau_c).sum_se

    tr_psi = np.array([float(np.trace(stats.psi[k]).real) for k in range(k_users)])
    gamma = np.array([b.gamma for b in breakdowns])
    interference = np.array([b.interference for b in breakdowns])

    # quotient-rule weights of dS_k and dI~_k inside df
    alpha = prelog * _LOG2E / ((1.0 + gamma) * interference)
    beta = alpha * gamma

    r_hat_sum = stats.r_hat.sum(axis=0)
    m_bs = cfg.m_bs
    eye = np.eye(m_bs)
    theta = np.empty((k_users, m_bs, m_bs), dtype=complex)
    t_mat = np.einsum("k,kij->ij", beta, stats.psi, optimize=True)
    for k in range(k_users):
        a_k = stats.q[k] @ stats.r_hat[k]
        b_k = a_k + a_k.conj().T - a_k @ a_k.conj().T
        s_hat = r_hat_sum + eye / rho_d - 2.0 * stats.psi[k]
        sens = a_k @ s_hat - a_k @ s_hat @ a_k.conj().T + s_hat @ a_k.conj().T
        theta[k] = 2.0 * alpha[k] * tr_psi[k] * b_k - beta[k] * sens - t_mat

    g_phi = None
    g_lam = None

    if want_phi:
        # dR^_i = (dV)^H R_i V + V^H R_i dV with R_i = gains_i * R_bsim, so
        # all users fold into one weight E = R_bsim V (sum_i gains_i Theta_i)
        m_theta = np.einsum("k,kij->ij", stats.gains.astype(complex), theta,
                            optimize=True)
        e_mat = scenario.r_bsim.entries @ stats.v @ m_theta
        x1 = e_mat @ scenario.stack.w1.conj().T
        l_count = cfg.bsim_layers
        g_phi = np.empty((l_count, cfg.m), dtype=complex)
        for l in range(l_count):
            g_phi[l] = np.einsum(
                "jm,jk,mk->m",
                partials.a[l].conj(), x1, partials.c[l].conj(), optimize=True,
            )

    if want_lam:
        # R^_i moves only through the trace factor: dR^_i = beta^_i dt R^_base
        c_lam = float(
            sum(
                scenario.losses.beta_hat[k]
                * np.einsum("ij,ji->", stats.r_hat_base, theta[k], optimize=True).real
                for k in range(k_users)
            )
        )
        y_mat = scenario.r_csim.entries @ stats.z @ scenario.r_csim.entries
        s_count = cfg.csim_layers
        g_lam = np.empty((s_count, cfg.n), dtype=complex)
        for s in range(s_count):
            g_tilde = scenario.stack.u[s] @ partials.d[s]
            g_lam[s] = c_lam * np.einsum(
                "jn,jk,nk->n",
                partials.f[s].conj(), y_mat, g_tilde.conj(), optimize=True,
            )

    return value, g_phi, g_lam


def grad_phase_shifts(profile: PhaseProfile, scenario: Scenario) -> GradientPair:
    """Analytic gradients of the sum SE w.r.t. the conjugated coefficients."""
    _, g_phi, g_lam = _grad_coeffs(scenario, profile.phi(), profile.lam())
    return GradientPair(d_phi=g_phi, d_lam=g_lam)


def finite_difference_gradient(
    profile: PhaseProfile, scenario: Scenario, step: float = 1e-6
) -> GradientPair:
    """Central differences over the raw phase angles, mapped to the same
    conjugate-coordinate convention as the analytic gradient (its tangential
    component: g = (df/dtheta / 2) * j * e^{j theta})."""
    if step <= 0:
        raise ValueError("step must be positive")
    d_theta = np.empty_like(profile.bsim)
    d_xi = np.empty_like(profile.csim)

    lam_fixed = np.exp(1j * profile.csim)
    work = profile.bsim.copy()
    flat = work.ravel()
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + step
        f_plus = _objective_coeffs(scenario, np.exp(1j * work), lam_fixed)
        flat[idx] = orig - step
        f_minus = _objective_coeffs(scenario, np.exp(1j * work), lam_fixed)
        flat[idx] = orig
        d_theta.ravel()[idx] = (f_plus - f_minus) / (2.0 * step)

    phi_fixed = np.exp(1j * profile.bsim)
    work = profile.csim.copy()
    flat = work.ravel()
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + step
        f_plus = _objective_coeffs(scenario, phi_fixed, np.exp(1j * work))
        flat[idx] = orig - step
        f_minus = _objective_coeffs(scenario, phi_fixed, np.exp(1j * work))
        flat[idx] = orig
        d_xi.ravel()[idx] = (f_plus - f_minus) / (2.0 * step)

    return GradientPair(
        d_phi=0.5 * d_theta * 1j * np.exp(1j * profile.bsim),
        d_lam=0.5 * d_xi * 1j * np.exp(1j * profile.csim),
    )


def angle_gradient(profile: PhaseProfile, pair: GradientPair):
    """Map conjugate-coordinate gradients to d(objective)/d(angle):
    df/dtheta = 2 Im(conj(phi) * g)."""
    d_theta = 2.0 * np.imag(np.conj(np.exp(1j * profile.bsim)) * pair.d_phi)
    d_xi = 2.0 * np.imag(np.conj(np.exp(1j * profile.csim)) * pair.d_lam)
    return d_theta, d_xi


def gradient_check(
    scenario: Scenario,
    profile: PhaseProfile,
    step: float = 1e-6,
    rel_floor: float = 1e-3,
) -> float:
    """Max elementwise relative error, analytic vs central differences.

    Comparison runs in angle space (the component finite differences can
    see).  Central differences of an O(1) objective resolve a derivative no
    finer than about eps*|f|/step in absolute terms, so entries below
    rel_floor times the largest gradient magnitude are measured against that
    floor rather than their own (noise-dominated) value.
    """
    analytic = grad_phase_shifts(profile, scenario)
    fd = finite_difference_gradient(profile, scenario, step)
    a_theta, a_xi = angle_gradient(profile, analytic)
    f_theta, f_xi = angle_gradient(profile, fd)
    a = np.concatenate([a_theta.ravel(), a_xi.ravel()])
    b = np.concatenate([f_theta.ravel(), f_xi.ravel()])
    scale = np.abs(b).max()
    if scale == 0.0:
        return float(np.abs(a).max())
    denom = np.maximum(np.abs(b), rel_floor * scale)
    return float((np.abs(a - b) / denom).max())


# ---------------------------------------------------------------------------
# projection and ascent
# ---------------------------------------------------------------------------

def project_unit_modulus(candidate: np.ndarray) -> np.ndarray:
    """Entrywise projection onto the unit circle; exact zeros map to 1+0j
    (any phase is admissible there, a fixed choice keeps runs reproducible)."""
    candidate = np.asarray(candidate, dtype=complex)
    mag = np.abs(candidate)
    safe = np.where(mag == 0.0, 1.0, mag)
    return np.where(mag == 0.0, 1.0 + 0.0j, candidate / safe)


def _inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(2.0 * np.real(np.vdot(a, b)))


def _profile_from_coeffs(phi: np.ndarray, lam: np.ndarray) -> PhaseProfile:
    return PhaseProfile(np.angle(phi), np.angle(lam))


def pgam_optimize(
    initial: PhaseProfile,
    scenario: Scenario,
    params: LineSearchParams | None = None,
) -> tuple[PhaseProfile, OptimizerTrace]:
    """Simultaneous projected gradient ascent on both stacks."""
    params = params or LineSearchParams()
    t0 = time.perf_counter()
    phi = np.exp(1j * initial.bsim)
    lam = np.exp(1j * initial.csim)

    trace = OptimizerTrace()
    mu = params.mu_init
    for _ in range(params.max_iters):
        f_cur, g_phi, g_lam = _grad_coeffs(scenario, phi, lam)
        if not trace.objective:
            trace.objective.append(f_cur)
        if max(np.abs(g_phi).max(), np.abs(g_lam).max()) == 0.0:
            break
        shrinks = 0
        while True:
            cand_phi = project_unit_modulus(phi + mu * g_phi)
            cand_lam = project_unit_modulus(lam + mu * g_lam)
            d_phi = cand_phi - phi
            d_lam = cand_lam - lam
            move = float(np.vdot(d_phi, d_phi).real + np.vdot(d_lam, d_lam).real)
            if move == 0.0:
                break
            f_next = _objective_coeffs(scenario, cand_phi, cand_lam)
            q_model = f_cur + _inner(g_phi, d_phi) + _inner(g_lam, d_lam) - move / mu
            if f_next > q_model:
                break
            mu *= params.kappa
            shrinks += 1
            if shrinks > params.max_backtracks:
                raise DegenerateGradientError(
                    "line search exhausted the shrink cap",
                    {"mu": mu, "objective": f_cur, "shrinks": shrinks},
                )
        if move == 0.0:
            break  # projected step is a fixed point: stationary
        phi, lam = cand_phi, cand_lam
        trace.objective.append(f_next)
        trace.mu.append(mu)
        trace.backtracks.append(shrinks)
        trace.accepted.append(True)
        if shrinks == 0 and params.mu_growth > 1.0:
            mu *= params.mu_growth
        if f_next - f_cur < params.tol:
            break

    if not trace.objective:
        trace.objective.append(_objective_coeffs(scenario, phi, lam))
    trace.wall_time = time.perf_counter() - t0
    return _profile_from_coeffs(phi, lam), trace


def _block_step(scenario, phi, lam, which: str, f_cur, g, mu, params):
    """One backtracked projected step on a single stack; other stack frozen."""
    shrinks = 0
    while True:
        if which == "phi":
            cand = project_unit_modulus(phi + mu * g)
            diff = cand - phi
        else:
            cand = project_unit_modulus(lam + mu * g)
            diff = cand - lam
        move = float(np.vdot(diff, diff).real)
        if move == 0.0:
            return phi, lam, f_cur, mu, shrinks, False
        if which == "phi":
            f_next = _objective_coeffs(scenario, cand, lam)
        else:
            f_next = _objective_coeffs(scenario, phi, cand)
        q_model = f_cur + _inner(g, diff) - move / mu
        if f_next > q_model:
            if which == "phi":
                return cand, lam, f_next, mu, shrinks, True
            return phi, cand, f_next, mu, shrinks, True
        mu *= params.kappa
        shrinks += 1
        if shrinks > params.max_backtracks:
            raise DegenerateGradientError(
                "alternating line search exhausted the shrink cap",
                {"block": which, "mu": mu, "objective": f_cur},
            )


def ao_optimize(
    initial: PhaseProfile,
    scenario: Scenario,
    params: LineSearchParams | None = None,
) -> tuple[PhaseProfile, OptimizerTrace]:
    """Alternating baseline: optimize one stack to the stopping rule with the
    other frozen, then switch, until neither stack improves.

    Budget accounting matches the simultaneous method: params.max_iters is
    the total number of gradient evaluations, each inner ascent step spends
    one (on the active stack's gradient), and the trace records the objective
    per evaluation, so traces of both methods compare directly at any budget.
    """
    params = params or LineSearchParams()
    t0 = time.perf_counter()
    phi = np.exp(1j * initial.bsim)
    lam = np.exp(1j * initial.csim)

    trace = OptimizerTrace()
    f_cur = _objective_coeffs(scenario, phi, lam)
    trace.objective.append(f_cur)
    mu = {"phi": params.mu_init, "lam": params.mu_init}
    evals = 0
    block = "phi"
    cycle_start = f_cur
    stalled_blocks = 0

    while evals < params.max_iters:
        # inner pass: ascend the active block until its improvement stalls
        moved_any = False
        while evals < params.max_iters:
            if block == "phi":
                _, g, _ = _grad_coeffs(scenario, phi, lam, want_lam=False)
            else:
                _, _, g = _grad_coeffs(scenario, phi, lam, want_phi=False)
            evals += 1
            if np.abs(g).max() == 0.0:
                break
            phi, lam, f_next, mu[block], shrinks, moved = _block_step(
                scenario, phi, lam, block, f_cur, g, mu[block], params
            )
            if not moved:
                break
            if shrinks == 0 and params.mu_growth > 1.0:
                mu[block] *= params.mu_growth
            trace.objective.append(f_next)
            trace.mu.append(mu[block])
            trace.backtracks.append(shrinks)
            trace.accepted.append(True)
            moved_any = True
            improvement = f_next - f_cur
            f_cur = f_next
            if improvement < params.tol:
                break

        stalled_blocks = 0 if moved_any else stalled_blocks + 1
        if block == "lam":
            # full alternation cycle finished
            if f_cur - cycle_start < params.tol or stalled_blocks >= 2:
                break
            cycle_start = f_cur
        block = "lam" if block == "phi" else "phi"
        if stalled_blocks >= 2:
            break

    trace.wall_time = time.perf_counter() - t0
    return _profile_from_coeffs(phi, lam), trace


def multi_start(
    scenario: Scenario,
    params: LineSearchParams | None = None,
    n_starts: int = 5,
    seed: int = 1,
    method: str = "pgam",
):
    """Best-of-n optimization from uniform-random initial phases.

    Returns (best_profile, best_trace, final_objectives).  Start i draws its
    initial profile from stream(seed, "init", i), so results do not depend on
    scheduling.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    optimize = {"pgam": pgam_optimize, "ao": ao_optimize}[method]
    results = []
    for i in range(n_starts):
        init = scenario.random_profile(stream(seed, "init", i))
        results.append(optimize(init, scenario, params))
    finals = np.array([trace.objective[-1] for _, trace in results])
    best = int(np.argmax(finals))
    best_profile, best_trace = results[best]
    return best_profile, best_trace, finals
