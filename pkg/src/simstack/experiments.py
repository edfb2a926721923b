"""Experiment orchestration: sweeps, convergence studies, validation, CSV emission.

Every command writes one CSV (stable, documented schema; one row per record)
plus a JSON sidecar `<out>.json` with the resolved configuration, seed,
normalization reference and wall time.  CSV content is a pure function of
(config, seed): Monte Carlo work is chunked with per-chunk seeded streams and
reduced in fixed order, so thread count never changes a byte of the CSV.
Wall time lives only in the sidecar for that reason.
"""
from __future__ import annotations

import dataclasses
import json
import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import channel_stats as cs
from . import estimation as est
from .config import ConfigError, ExperimentConfig, config_hash
from .optimizer import (
    LineSearchParams,
    OptimizerTrace,
    ao_optimize,
    finite_difference_gradient,
    grad_phase_shifts,
    gradient_check,
    multi_start,
    objective,
    pgam_optimize,
)
from .propagation import PhaseProfile
from .rng import stream
from .scenario import Scenario
from .spectral_efficiency import closed_form_sinr, monte_carlo_sinr, sum_se

SCHEMA_VERSION = 1

SWEEP_PARAMETERS = ("m", "n", "l", "s", "k", "snr_db", "m_bs")


def _fmt(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def write_csv(path: str, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_sidecar(path: str, config: ExperimentConfig, extras: dict) -> None:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": {
            "scenario": dataclasses.asdict(config.scenario),
            "optimizer": dataclasses.asdict(config.optimizer),
            "run": dataclasses.asdict(config.run),
        },
        "config_hash": config_hash(config),
    }
    payload.update(extras)
    with open(path + ".json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def save_profile(path: str, profile: PhaseProfile) -> None:
    """Plain-text profile: layer count, atom count, then angles row-major,
    for the BS stack followed by the environment stack."""
    l, m = profile.bsim.shape
    s, n = profile.csim.shape
    tokens = [str(l), str(m)]
    tokens += [format(v, ".17g") for v in profile.bsim.ravel()]
    tokens += [str(s), str(n)]
    tokens += [format(v, ".17g") for v in profile.csim.ravel()]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(tokens) + "\n")


def load_profile(path: str) -> PhaseProfile:
    with open(path, "r", encoding="utf-8") as fh:
        tokens = fh.read().split()
    pos = 0

    def take(count):
        nonlocal pos
        chunk = tokens[pos:pos + count]
        pos += count
        return chunk

    l, m = int(take(1)[0]), int(take(1)[0])
    bsim = np.array([float(v) for v in take(l * m)]).reshape(l, m)
    s, n = int(take(1)[0]), int(take(1)[0])
    csim = np.array([float(v) for v in take(s * n)]).reshape(s, n)
    return PhaseProfile(bsim, csim)


def dump_stack(path: str, scenario: Scenario) -> None:
    """Debug dump of the transmission matrices, row-major re/im pairs."""
    lines = []
    for label, mats in (("W", scenario.stack.w), ("U", scenario.stack.u)):
        for idx, mat in enumerate(mats, start=1):
            lines.append(f"# {label}{idx} {mat.shape[0]} {mat.shape[1]}")
            for row in mat:
                lines.append(" ".join(
                    f"{v.real:.17g} {v.imag:.17g}" for v in row
                ))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def line_search_params(config: ExperimentConfig) -> LineSearchParams:
    opt = config.optimizer
    return LineSearchParams(
        mu_init=opt.mu_init, kappa=opt.kappa, max_iters=opt.max_iters,
        tol=opt.tol, mu_growth=opt.mu_growth, max_backtracks=opt.max_backtracks,
    )


# ---------------------------------------------------------------------------
# optimize
# ---------------------------------------------------------------------------

def run_optimize(config: ExperimentConfig, out: str,
                 profile_out: str | None = None) -> dict:
    """Multi-start optimization; trace CSV for the best start."""
    t0 = time.perf_counter()
    scenario = Scenario(config.scenario)
    params = line_search_params(config)
    best_profile, best_trace, finals = multi_start(
        scenario, params, n_starts=config.optimizer.starts,
        seed=config.run.seed, method=config.optimizer.method,
    )
    rows = _trace_rows(best_trace)
    write_csv(out, ["iter", "objective", "mu", "backtracks"], rows)
    if profile_out:
        save_profile(profile_out, best_profile)
    result = {
        "seed": config.run.seed,
        "method": config.optimizer.method,
        "final_objectives": [float(v) for v in finals],
        "best_objective": float(max(finals)),
        "reference_gain": scenario.reference_gain,
        "wall_time_s": time.perf_counter() - t0,
    }
    write_sidecar(out, config, result)
    return result


def _trace_rows(trace: OptimizerTrace) -> list[list]:
    rows = [[0, trace.objective[0], "", ""]]
    for i in range(1, len(trace.objective)):
        rows.append([i, trace.objective[i], trace.mu[i - 1], trace.backtracks[i - 1]])
    return rows


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _square_side(count: int, name: str) -> int:
    side = int(round(math.sqrt(count)))
    if side * side != count:
        raise ConfigError(f"swept {name} = {count} is not a perfect square grid")
    return side


def _apply_sweep_value(config: ExperimentConfig, parameter: str, value) -> ExperimentConfig:
    scenario = config.scenario
    if parameter == "m":
        side = _square_side(int(value), "m")
        scenario = scenario.replace(m=int(value), m_x=side, m_y=side)
    elif parameter == "n":
        side = _square_side(int(value), "n")
        scenario = scenario.replace(n=int(value), n_x=side, n_y=side)
    elif parameter == "l":
        scenario = scenario.replace(bsim_layers=int(value))
    elif parameter == "s":
        scenario = scenario.replace(csim_layers=int(value))
    elif parameter == "k":
        scenario = scenario.replace(num_users=int(value))
    elif parameter == "m_bs":
        scenario = scenario.replace(m_bs=int(value))
    elif parameter == "snr_db":
        scenario = scenario.replace(snr_pilot_db=float(value), snr_data_db=float(value))
    else:
        raise ConfigError(
            f"unknown sweep parameter {parameter!r}; choose from {SWEEP_PARAMETERS}"
        )
    return config.replace(scenario=scenario)


RANDOM_BASELINE_DRAWS = 20

SWEEP_HEADER = ["experiment", "parameter", "value", "context", "user",
                "se_bits_per_hz", "seed", "config_hash", "error"]


def run_sweep(
    config: ExperimentConfig,
    parameter: str,
    values: list,
    out: str,
    with_mc: bool = False,
    with_nmse: bool = False,
    threads: int = 1,
) -> list[list]:
    """Re-optimize at every sweep value; emit optimized/random/equal contexts.

    The SNR normalization reference is computed once at the base config and
    held fixed across the sweep, so geometry changes show up as gains rather
    than being re-anchored away.
    """
    t0 = time.perf_counter()
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigError(
            f"unknown sweep parameter {parameter!r}; choose from {SWEEP_PARAMETERS}"
        )
    base_scenario = Scenario(config.scenario)
    reference = base_scenario.reference_gain
    seed = config.run.seed
    chash = config_hash(config)
    experiment = f"sweep-{parameter}"
    rows: list[list] = []

    for value in values:
        try:
            point_cfg = _apply_sweep_value(config, parameter, value)
            scenario = Scenario(point_cfg.scenario, reference_gain_override=reference)
        except (ConfigError, ValueError) as exc:
            rows.append([experiment, parameter, value, "error", "", "",
                         seed, chash, str(exc)])
            continue

        params = line_search_params(point_cfg)
        best_profile, _, _ = multi_start(
            scenario, params, n_starts=point_cfg.optimizer.starts,
            seed=seed, method=point_cfg.optimizer.method,
        )
        rows += _se_rows(experiment, parameter, value, "optimized", scenario,
                         best_profile, seed, chash)

        rand_user, rand_sum = random_baseline_se(scenario, seed)
        for k, se in enumerate(rand_user, start=1):
            rows.append([experiment, parameter, value, "random_phase", k,
                         float(se), seed, chash, ""])
        rows.append([experiment, parameter, value, "random_phase", "sum",
                     float(rand_sum), seed, chash, ""])

        rows += _se_rows(experiment, parameter, value, "equal_phase", scenario,
                         scenario.zero_profile(), seed, chash)

        if with_mc:
            mc = monte_carlo_sinr(scenario, best_profile, trials=config.run.trials,
                                  seed=seed, threads=threads)
            report = sum_se(mc, scenario.config.pilot_length,
                            scenario.config.tau_c, mode="monte_carlo")
            rows += _report_rows(experiment, parameter, value, "optimized_mc",
                                 report, seed, chash)
        if with_nmse:
            stats = scenario.statistics(best_profile)
            for k in range(scenario.config.num_users):
                nm = est.nmse(stats.psi[k], stats.r_hat[k])
                rows.append([experiment, parameter, value, "nmse", k + 1, nm,
                             seed, chash, ""])

    write_csv(out, SWEEP_HEADER, rows)
    write_sidecar(out, config, {
        "experiment": experiment,
        "values": list(values),
        "seed": seed,
        "reference_gain": reference,
        "wall_time_s": time.perf_counter() - t0,
    })
    return rows


def _se_rows(experiment, parameter, value, context, scenario, profile, seed, chash):
    stats = scenario.statistics(profile)
    cfg = scenario.config
    breakdowns = [closed_form_sinr(stats.psi, stats.r_hat, scenario.rho_data, k)
                  for k in range(cfg.num_users)]
    report = sum_se(breakdowns, cfg.pilot_length, cfg.tau_c)
    return _report_rows(experiment, parameter, value, context, report, seed, chash)


def _report_rows(experiment, parameter, value, context, report, seed, chash):
    rows = []
    for k, se in enumerate(report.se_per_user, start=1):
        rows.append([experiment, parameter, value, context, k, float(se),
                     seed, chash, ""])
    rows.append([experiment, parameter, value, context, "sum",
                 float(report.sum_se), seed, chash, ""])
    return rows


def random_baseline_se(scenario: Scenario, seed: int,
                       draws: int = RANDOM_BASELINE_DRAWS) -> tuple[np.ndarray, float]:
    """Per-user and sum closed-form SE averaged over random profiles."""
    cfg = scenario.config
    per_user = np.zeros(cfg.num_users)
    total = 0.0
    for i in range(draws):
        profile = scenario.random_profile(stream(seed, "random-baseline", i))
        stats = scenario.statistics(profile)
        breakdowns = [closed_form_sinr(stats.psi, stats.r_hat, scenario.rho_data, k)
                      for k in range(cfg.num_users)]
        report = sum_se(breakdowns, cfg.pilot_length, cfg.tau_c)
        per_user += report.se_per_user
        total += report.sum_se
    return per_user / draws, total / draws


# ---------------------------------------------------------------------------
# convergence study
# ---------------------------------------------------------------------------

CONVERGENCE_HEADER = ["method", "start", "iter", "objective", "mu",
                      "backtracks", "seed", "config_hash"]


def run_convergence(config: ExperimentConfig, out: str) -> list[list]:
    """Both methods from identical initial points, full per-iteration traces.

    Start i of either method begins at the same random profile, so the rows
    double as the head-to-head comparison and the multi-start spread report.
    """
    t0 = time.perf_counter()
    scenario = Scenario(config.scenario)
    params = line_search_params(config)
    seed = config.run.seed
    chash = config_hash(config)
    rows: list[list] = []
    finals: dict[str, list[float]] = {"pgam": [], "ao": []}

    for start in range(config.optimizer.starts):
        init = scenario.random_profile(stream(seed, "init", start))
        for method, optimize in (("pgam", pgam_optimize), ("ao", ao_optimize)):
            _, trace = optimize(init, scenario, params)
            for row in _trace_rows(trace):
                rows.append([method, start] + row + [seed, chash])
            finals[method].append(trace.objective[-1])

    write_csv(out, CONVERGENCE_HEADER, rows)
    spread = {
        method: (max(v) - min(v)) / max(v) if max(v) > 0 else 0.0
        for method, v in finals.items()
    }
    write_sidecar(out, config, {
        "seed": seed,
        "final_objectives": finals,
        "relative_spread": spread,
        "reference_gain": scenario.reference_gain,
        "wall_time_s": time.perf_counter() - t0,
    })
    return rows


# ---------------------------------------------------------------------------
# NMSE vs SNR
# ---------------------------------------------------------------------------

NMSE_HEADER = ["snr_db", "user", "nmse_closed_form"]


def run_nmse(config: ExperimentConfig, out: str,
             snrs_db: list[float] | None = None) -> list[list]:
    """Closed-form channel-estimation NMSE per user over an SNR sweep.

    The phase profile is one seeded random draw, held fixed across SNR.
    """
    t0 = time.perf_counter()
    if snrs_db is None:
        snrs_db = [float(v) for v in range(-10, 31, 2)]
    seed = config.run.seed
    base_scenario = Scenario(config.scenario)
    reference = base_scenario.reference_gain
    profile = base_scenario.random_profile(stream(seed, "nmse-profile"))
    rows = []
    for snr in snrs_db:
        cfg = config.scenario.replace(snr_pilot_db=float(snr), snr_data_db=float(snr))
        scenario = Scenario(cfg, reference_gain_override=reference)
        stats = scenario.statistics(profile)
        for k in range(cfg.num_users):
            rows.append([float(snr), k + 1, est.nmse(stats.psi[k], stats.r_hat[k])])
    write_csv(out, NMSE_HEADER, rows)
    write_sidecar(out, config, {
        "seed": seed,
        "snrs_db": [float(v) for v in snrs_db],
        "reference_gain": reference,
        "wall_time_s": time.perf_counter() - t0,
    })
    return rows


def monte_carlo_nmse(scenario: Scenario, profile: PhaseProfile, trials: int,
                     seed: int, chunk_size: int = 2048) -> np.ndarray:
    """Empirical NMSE per user: mean ||c^ - c||^2 / mean ||c||^2."""
    stats = scenario.statistics(profile)
    k_users = scenario.config.num_users
    err_acc = np.zeros(k_users)
    pow_acc = np.zeros(k_users)
    sizes = [chunk_size] * (trials // chunk_size)
    if trials % chunk_size:
        sizes.append(trials % chunk_size)
    for idx, size in enumerate(sizes):
        rng = stream(seed, "nmse-mc", idx)
        _, _, _, _, c = cs.draw_channel_batch(
            rng, scenario.r_bsim_sqrt, scenario.r_csim_sqrt, scenario.losses,
            stats.z, stats.p, scenario.stack.w1, trials=size,
        )
        r = est.simulate_pilot_rx(c, scenario.pilots, rng)
        for k in range(k_users):
            c_hat = est.lmmse_estimate(r[:, k, :], stats.r_hat[k], stats.q[k])
            err_acc[k] += float(np.sum(np.abs(c_hat - c[:, k, :]) ** 2))
            pow_acc[k] += float(np.sum(np.abs(c[:, k, :]) ** 2))
    return err_acc / pow_acc


# ---------------------------------------------------------------------------
# Monte Carlo SINR validation data
# ---------------------------------------------------------------------------

MC_VALIDATE_HEADER = ["user", "gamma_closed", "gamma_mc", "rel_err",
                      "trials", "seed"]


def run_mc_validate(config: ExperimentConfig, out: str,
                    threads: int = 1) -> list[list]:
    """Closed-form vs Monte Carlo use-and-then-forget SINR per user."""
    t0 = time.perf_counter()
    scenario = Scenario(config.scenario)
    seed = config.run.seed
    trials = config.run.trials
    profile = scenario.random_profile(stream(seed, "mc-profile"))
    stats = scenario.statistics(profile)
    k_users = config.scenario.num_users
    closed = [closed_form_sinr(stats.psi, stats.r_hat, scenario.rho_data, k)
              for k in range(k_users)]
    empirical = monte_carlo_sinr(scenario, profile, trials=trials, seed=seed,
                                 threads=threads)
    rows = []
    for k in range(k_users):
        rel = abs(empirical[k].gamma - closed[k].gamma) / closed[k].gamma
        rows.append([k + 1, closed[k].gamma, empirical[k].gamma, rel,
                     trials, seed])
    write_csv(out, MC_VALIDATE_HEADER, rows)
    write_sidecar(out, config, {
        "seed": seed,
        "trials": trials,
        "reference_gain": scenario.reference_gain,
        "wall_time_s": time.perf_counter() - t0,
    })
    return rows


# ---------------------------------------------------------------------------
# gradient check
# ---------------------------------------------------------------------------

GRADIENT_HEADER = ["instance", "max_rel_err", "tol", "passed", "seed"]
GRADIENT_TOL = 1e-5
FD_STEP = 1e-6


def run_gradient_check(config: ExperimentConfig, out: str,
                       instances: int = 20) -> tuple[list[list], bool]:
    t0 = time.perf_counter()
    scenario = Scenario(config.scenario)
    seed = config.run.seed
    rows = []
    all_ok = True
    for i in range(instances):
        profile = scenario.random_profile(stream(seed, "gradcheck", i))
        err = gradient_check(scenario, profile, step=FD_STEP)
        ok = err <= GRADIENT_TOL
        all_ok &= ok
        rows.append([i, err, GRADIENT_TOL, ok, seed])
    write_csv(out, GRADIENT_HEADER, rows)
    write_sidecar(out, config, {
        "seed": seed,
        "instances": instances,
        "fd_step": FD_STEP,
        "tolerance": GRADIENT_TOL,
        "wall_time_s": time.perf_counter() - t0,
    })
    return rows, all_ok


# ---------------------------------------------------------------------------
# validation suite
# ---------------------------------------------------------------------------

VALIDATION_HEADER = ["check", "detail", "residual", "tolerance", "passed", "seed"]

VALIDATION_TOLERANCES = {
    "gradient": GRADIENT_TOL,
    "channel_covariance": 0.02,
    "estimate_covariance": 0.02,
    "error_covariance": 0.02,
    "covariance_identity": 1e-12,
    "mc_sinr_oracle": 0.05,
    "nmse": 0.03,
}

VALIDATION_TRIALS = {
    "channel_covariance": 200_000,
    "estimator": 100_000,
    "mc_sinr_oracle": 10_000,
    "nmse": 100_000,
}


def _direct_only_scenario(config: ExperimentConfig) -> Scenario:
    """Scenario with the environment stack disconnected (cascaded gain zero):
    the digital-domain channel is then exactly Gaussian with independent
    users, where the second-order SINR prediction is assumption-free."""
    scenario = Scenario(config.scenario)
    losses = scenario.losses
    scenario.losses = dataclasses.replace(
        losses,
        beta_tilde=np.zeros_like(losses.beta_tilde),
        beta_hat=np.zeros_like(losses.beta_hat),
    )
    return scenario


def run_validation(config: ExperimentConfig, out: str,
                   corrupt: str | None = None, threads: int = 1) -> tuple[list[list], bool]:
    """End-to-end oracle suite; returns (rows, all_passed).

    corrupt="gradient" is a negative-control hook: it perturbs the analytic
    gradient before the comparison, which must make the named check fail.
    """
    t0 = time.perf_counter()
    cfg = config.scenario
    if cfg.m > 36 or cfg.n > 36:
        warnings.warn(
            f"validation at m={cfg.m}, n={cfg.n} will be slow; "
            "36 atoms per layer or fewer is recommended", stacklevel=2,
        )
    scenario = Scenario(cfg)
    seed = config.run.seed
    rows: list[list] = []

    def record(check, detail, residual, tol):
        rows.append([check, detail, residual, tol, residual <= tol, seed])

    # 1. analytic gradient vs central differences
    tol = VALIDATION_TOLERANCES["gradient"]
    for i in range(3):
        profile = scenario.random_profile(stream(seed, "gradcheck", i))
        err = gradient_check(scenario, profile, step=FD_STEP)
        if corrupt == "gradient":
            err += 1.0
        record("gradient", f"instance-{i}", err, tol)

    # 2. aggregated-channel covariance vs its closed form
    profile = scenario.random_profile(stream(seed, "validate-profile"))
    stats = scenario.statistics(profile)
    trials = VALIDATION_TRIALS["channel_covariance"]
    acc = [np.zeros((cfg.m, cfg.m), dtype=complex) for _ in range(cfg.num_users)]
    chunk = 4096
    sizes = [chunk] * (trials // chunk) + ([trials % chunk] if trials % chunk else [])
    for idx, size in enumerate(sizes):
        rng = stream(seed, "cov-check", idx)
        _, _, _, h, _ = cs.draw_channel_batch(
            rng, scenario.r_bsim_sqrt, scenario.r_csim_sqrt, scenario.losses,
            stats.z, stats.p, scenario.stack.w1, trials=size,
        )
        for k in range(cfg.num_users):
            acc[k] += np.einsum("ti,tj->ij", h[:, k, :], h[:, k, :].conj())
    tol = VALIDATION_TOLERANCES["channel_covariance"]
    for k in range(cfg.num_users):
        emp = acc[k] / trials
        r_k = stats.gains[k] * scenario.r_bsim.entries
        rel = float(np.linalg.norm(emp - r_k) / np.linalg.norm(r_k))
        record("channel_covariance", f"user-{k + 1}", rel, tol)

    # 3. estimator covariances and the exact split identity
    trials = VALIDATION_TRIALS["estimator"]
    est_acc = [np.zeros((cfg.m_bs, cfg.m_bs), dtype=complex) for _ in range(cfg.num_users)]
    err_acc = [np.zeros((cfg.m_bs, cfg.m_bs), dtype=complex) for _ in range(cfg.num_users)]
    sizes = [chunk] * (trials // chunk) + ([trials % chunk] if trials % chunk else [])
    for idx, size in enumerate(sizes):
        rng = stream(seed, "est-check", idx)
        _, _, _, _, c = cs.draw_channel_batch(
            rng, scenario.r_bsim_sqrt, scenario.r_csim_sqrt, scenario.losses,
            stats.z, stats.p, scenario.stack.w1, trials=size,
        )
        r = est.simulate_pilot_rx(c, scenario.pilots, rng)
        for k in range(cfg.num_users):
            c_hat = est.lmmse_estimate(r[:, k, :], stats.r_hat[k], stats.q[k])
            c_err = c[:, k, :] - c_hat
            est_acc[k] += np.einsum("ti,tj->ij", c_hat, c_hat.conj())
            err_acc[k] += np.einsum("ti,tj->ij", c_err, c_err.conj())
    for k in range(cfg.num_users):
        psi_emp = est_acc[k] / trials
        err_emp = err_acc[k] / trials
        rel_psi = float(np.linalg.norm(psi_emp - stats.psi[k])
                        / np.linalg.norm(stats.psi[k]))
        rel_err = float(np.linalg.norm(err_emp - stats.psi_tilde[k])
                        / np.linalg.norm(stats.psi_tilde[k]))
        record("estimate_covariance", f"user-{k + 1}", rel_psi,
               VALIDATION_TOLERANCES["estimate_covariance"])
        record("error_covariance", f"user-{k + 1}", rel_err,
               VALIDATION_TOLERANCES["error_covariance"])
        ident = float(np.abs(stats.psi[k] + stats.psi_tilde[k] - stats.r_hat[k]).max()
                      / np.abs(stats.r_hat[k]).max())
        record("covariance_identity", f"user-{k + 1}", ident,
               VALIDATION_TOLERANCES["covariance_identity"])

    # 4. Monte Carlo SINR machinery against the assumption-free second-order
    #    prediction in the direct-only (exactly Gaussian) regime
    direct = _direct_only_scenario(config)
    d_stats = direct.statistics(profile)
    empirical = monte_carlo_sinr(direct, profile,
                                 trials=VALIDATION_TRIALS["mc_sinr_oracle"],
                                 seed=seed, threads=threads)
    tol = VALIDATION_TOLERANCES["mc_sinr_oracle"]
    for k in range(cfg.num_users):
        tr_psi = float(np.trace(d_stats.psi[k]).real)
        cross = float(np.einsum("kij,ji->", d_stats.r_hat, d_stats.psi[k],
                                optimize=True).real)
        gamma_exact = tr_psi**2 / (cross + tr_psi / direct.rho_data)
        rel = abs(empirical[k].gamma - gamma_exact) / gamma_exact
        record("mc_sinr_oracle", f"user-{k + 1}", rel, tol)

    # 5. closed-form NMSE vs Monte Carlo
    nmse_mc = monte_carlo_nmse(scenario, profile,
                               trials=VALIDATION_TRIALS["nmse"], seed=seed)
    tol = VALIDATION_TOLERANCES["nmse"]
    for k in range(cfg.num_users):
        nmse_cf = est.nmse(stats.psi[k], stats.r_hat[k])
        rel = abs(nmse_mc[k] - nmse_cf) / nmse_cf
        record("nmse", f"user-{k + 1}", rel, tol)

    all_ok = all(bool(r[4]) for r in rows)
    write_csv(out, VALIDATION_HEADER, rows)
    write_sidecar(out, config, {
        "seed": seed,
        "tolerances": VALIDATION_TOLERANCES,
        "trials": VALIDATION_TRIALS,
        "fd_step": FD_STEP,
        "all_passed": all_ok,
        "reference_gain": scenario.reference_gain,
        "wall_time_s": time.perf_counter() - t0,
    })
    return rows, all_ok
