"""Scenario, optimizer and run configuration.

Defaults reproduce the full-scale reference setup (32-antenna BS, K=4 users,
100-atom metasurface layers, 4 layers per stack, 2 GHz carrier).  CI and the
validation suite use :func:`desk_scale` instead, which shrinks the surfaces so
every Monte Carlo oracle runs in seconds.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields

__all__ = [
    "ConfigError",
    "SystemConfig",
    "OptimizerConfig",
    "RunConfig",
    "ExperimentConfig",
    "load_config",
    "desk_scale",
    "db_to_linear",
    "config_hash",
]

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """A configuration file or parameter set failed validation."""


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """Every scalar parameter of the physical scenario."""

    # digital front end and users
    m_bs: int = 32
    num_users: int = 4

    # BS-side stack: layer count and per-layer atom grid
    m: int = 100
    m_x: int = 10
    m_y: int = 10
    bsim_layers: int = 4

    # environment stack
    n: int = 100
    n_x: int = 10
    n_y: int = 10
    csim_layers: int = 4

    # carrier and mechanical geometry
    frequency_hz: float = 2e9
    thickness_wavelengths: float = 5.0
    atom_pitch_wavelengths: float = 0.5
    bs_height_m: float = 10.0
    csim_x_m: float = 50.0
    csim_y_m: float = 10.0
    user_span_m: float = 20.0

    # antenna gains and path-loss exponents (defaults: urban macro style;
    # the measured-channel variant uses 2.29 / 1.88 for the user links)
    bs_gain_dbi: float = 5.0
    user_gain_dbi: float = 0.0
    alpha_bsim_csim: float = 2.0
    alpha_csim_user: float = 2.8
    alpha_bs_user: float = 3.5
    # extra attenuation on the direct BS-user link (obstruction between BS
    # and users); 0 dB keeps the unobstructed full-scale geometry
    direct_blockage_db: float = 0.0
    c0_override: float | None = None

    # SNR bookkeeping.  "strongest_user" interprets the configured SNRs as the
    # mean per-BS-antenna received SNR of the best user at the all-zero phase
    # profile (noise absorbs the reference link gain); "absolute" uses the
    # configured values against unit-variance noise directly.
    snr_reference: str = "strongest_user"
    snr_pilot_db: float = 6.0
    snr_data_db: float = 6.0

    # frame structure: pilot length (None -> one pilot per user) and
    # coherence block length in channel uses
    tau: int | None = None
    tau_c: int = 200

    def __post_init__(self):
        if self.m_x * self.m_y != self.m:
            raise ConfigError(
                f"grid mismatch: m_x*m_y = {self.m_x * self.m_y} but m = {self.m}"
            )
        if self.n_x * self.n_y != self.n:
            raise ConfigError(
                f"grid mismatch: n_x*n_y = {self.n_x * self.n_y} but n = {self.n}"
            )
        for name in ("m_bs", "num_users", "m", "m_x", "m_y", "bsim_layers",
                     "n", "n_x", "n_y", "csim_layers", "tau_c"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        for name in ("frequency_hz", "thickness_wavelengths",
                     "atom_pitch_wavelengths", "user_span_m"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.bs_height_m < 0:
            raise ConfigError("bs_height_m must be nonnegative")
        for name in ("alpha_bsim_csim", "alpha_csim_user", "alpha_bs_user"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.c0_override is not None and self.c0_override <= 0:
            raise ConfigError("c0_override must be positive")
        if self.snr_reference not in ("strongest_user", "absolute"):
            raise ConfigError(
                f"snr_reference must be 'strongest_user' or 'absolute', "
                f"got {self.snr_reference!r}"
            )
        if self.pilot_length < self.num_users:
            raise ConfigError("tau must be at least num_users (orthogonal pilots)")
        if self.pilot_length >= self.tau_c:
            raise ConfigError(
                f"pilot length {self.pilot_length} must be smaller than tau_c = {self.tau_c}"
            )

    # ---- derived quantities ----

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency_hz

    @property
    def atom_pitch(self) -> float:
        return self.atom_pitch_wavelengths * self.wavelength

    @property
    def atom_area(self) -> float:
        return self.atom_pitch ** 2

    @property
    def sim_thickness(self) -> float:
        return self.thickness_wavelengths * self.wavelength

    @property
    def bsim_layer_spacing(self) -> float:
        return self.sim_thickness / self.bsim_layers

    @property
    def csim_layer_spacing(self) -> float:
        return self.sim_thickness / self.csim_layers

    @property
    def pilot_length(self) -> int:
        return self.num_users if self.tau is None else self.tau

    @property
    def prelog(self) -> float:
        return (self.tau_c - self.pilot_length) / self.tau_c

    @property
    def rho_pilot(self) -> float:
        """Configured pilot SNR, linear (before any reference normalization)."""
        return db_to_linear(self.snr_pilot_db)

    @property
    def rho_data(self) -> float:
        return db_to_linear(self.snr_data_db)

    @property
    def c0(self) -> float:
        """Free-space gain at the 1 m reference distance, (lambda / 4 pi)^2."""
        if self.c0_override is not None:
            return self.c0_override
        return (self.wavelength / (4.0 * math.pi)) ** 2

    def replace(self, **kw) -> "SystemConfig":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "pgam"        # "pgam" or "ao"
    starts: int = 5
    mu_init: float = 1e3
    kappa: float = 0.5
    tol: float = 1e-5
    max_iters: int = 100
    mu_growth: float = 1.0      # >1 re-expands the step after a first-try accept
    max_backtracks: int = 60

    def __post_init__(self):
        if self.method not in ("pgam", "ao"):
            raise ConfigError(f"method must be 'pgam' or 'ao', got {self.method!r}")
        if not (0.0 < self.kappa < 1.0):
            raise ConfigError("kappa must lie in (0, 1)")
        if self.mu_init <= 0 or self.tol < 0 or self.max_iters < 1:
            raise ConfigError("invalid optimizer parameters")
        if self.starts < 1:
            raise ConfigError("starts must be >= 1")
        if self.mu_growth < 1.0:
            raise ConfigError("mu_growth must be >= 1")

    def replace(self, **kw) -> "OptimizerConfig":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 1
    trials: int = 10_000
    threads: int = 1

    def __post_init__(self):
        if self.trials < 1 or self.threads < 1:
            raise ConfigError("trials and threads must be >= 1")

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: SystemConfig = field(default_factory=SystemConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


def desk_scale(**scenario_overrides) -> ExperimentConfig:
    """Reduced-size preset used by CI and the validation oracles."""
    # Small surfaces cannot close the cascaded path's deficit against the
    # direct link by aperture alone the way 100-atom stacks do, so the desk
    # preset obstructs the direct link to keep the cascaded:direct power
    # ratio in the regime the full-scale scenario operates in.
    scenario = SystemConfig(
        m_bs=8, num_users=2,
        m=9, m_x=3, m_y=3, bsim_layers=2,
        n=9, n_x=3, n_y=3, csim_layers=2,
        direct_blockage_db=60.0,
    ).replace(**scenario_overrides)
    return ExperimentConfig(scenario=scenario)


# ---------------------------------------------------------------------------
# key = value config files (INI sections: [scenario], [optimizer], [run])
# ---------------------------------------------------------------------------

_SECTION_TYPES = {
    "scenario": SystemConfig,
    "optimizer": OptimizerConfig,
    "run": RunConfig,
}


def _coerce(raw: str, target_type, key: str):
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    try:
        if target_type in (int, "int", "int | None"):
            return int(raw)
        if target_type in (float, "float", "float | None"):
            return float(raw)
        if target_type in (bool, "bool"):
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"cannot parse value {raw!r} for key {key!r}") from exc


def load_config(path: str | None = None, text: str | None = None) -> ExperimentConfig:
    """Parse a sectioned key=value file; absent keys fall back to defaults.

    Unknown sections or keys raise :class:`ConfigError` naming the offender,
    as do out-of-range values and inconsistent atom grids.
    """
    parser = configparser.ConfigParser()
    try:
        if text is not None:
            parser.read_string(text)
        elif path is not None:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        else:
            raise ValueError("either path or text is required")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from exc

    blocks = {}
    for section in parser.sections():
        if section not in _SECTION_TYPES:
            raise ConfigError(f"unknown config section {section!r}")
        cls = _SECTION_TYPES[section]
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            kwargs[key] = _coerce(raw, known[key], key)
        try:
            blocks[section] = cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    return ExperimentConfig(
        scenario=blocks.get("scenario", SystemConfig()),
        optimizer=blocks.get("optimizer", OptimizerConfig()),
        run=blocks.get("run", RunConfig()),
    )


def config_hash(config: ExperimentConfig) -> str:
    """Short digest of the resolved scenario+optimizer blocks for result rows."""
    payload = {
        "scenario": dataclasses.asdict(config.scenario),
        "optimizer": dataclasses.asdict(config.optimizer),
    }
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]
