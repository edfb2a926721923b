"""Double stacked-metasurface massive MIMO uplink simulator.

Library layout:

- config: scenario/optimizer/run parameters, key=value config files
- geometry: atom grids, link distances, propagation angles
- propagation: transmission matrices, stack responses, partial products
- channel_stats: correlation, path loss, covariances, fading draws
- estimation: pilots and the LMMSE channel estimator
- spectral_efficiency: closed-form SINR/SE and its Monte Carlo oracle
- optimizer: analytic gradients, projected gradient ascent, baselines
- experiments: sweeps, convergence studies, validation, CSV emission
"""
from .config import (
    ConfigError,
    ExperimentConfig,
    OptimizerConfig,
    RunConfig,
    SystemConfig,
    desk_scale,
    load_config,
)
from .propagation import PhaseProfile
from .scenario import Scenario

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "OptimizerConfig",
    "RunConfig",
    "SystemConfig",
    "desk_scale",
    "load_config",
    "PhaseProfile",
    "Scenario",
]

__version__ = "0.1.0"
