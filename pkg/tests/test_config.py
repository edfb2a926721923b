import math

import pytest

from simstack.config import (
    ConfigError,
    ExperimentConfig,
    SystemConfig,
    config_hash,
    db_to_linear,
    desk_scale,
    load_config,
)


def test_defaults_match_reference_setup():
    cfg = SystemConfig()
    assert cfg.m_bs == 32
    assert cfg.num_users == 4
    assert cfg.m == cfg.n == 100
    assert cfg.bsim_layers == cfg.csim_layers == 4
    assert cfg.frequency_hz == 2e9
    assert cfg.tau_c == 200
    assert cfg.pilot_length == 4  # tau defaults to the user count
    assert cfg.snr_pilot_db == cfg.snr_data_db == 6.0
    assert cfg.thickness_wavelengths == 5.0
    assert cfg.bs_height_m == 10.0
    assert (cfg.csim_x_m, cfg.csim_y_m) == (50.0, 10.0)
    assert cfg.user_span_m == 20.0
    assert (cfg.alpha_csim_user, cfg.alpha_bs_user) == (2.8, 3.5)


def test_derived_quantities():
    cfg = SystemConfig()
    assert cfg.wavelength == pytest.approx(0.1499, abs=1e-4)
    assert cfg.atom_pitch == pytest.approx(cfg.wavelength / 2)
    assert cfg.atom_area == pytest.approx(cfg.atom_pitch**2)
    assert cfg.bsim_layer_spacing == pytest.approx(5 * cfg.wavelength / 4)
    assert cfg.prelog == pytest.approx(0.98)
    # free-space reference gain at 2 GHz
    assert cfg.c0 == pytest.approx(1.4228e-4, rel=1e-3)
    assert 10 * math.log10(cfg.c0) == pytest.approx(-38.47, abs=0.01)


def test_db_conversion():
    assert db_to_linear(6.0) == pytest.approx(3.981, abs=1e-3)


def test_empty_file_gives_defaults():
    config = load_config(text="")
    assert config.scenario == SystemConfig()
    assert config == ExperimentConfig()


def test_partial_file_overrides():
    config = load_config(text="""
[scenario]
m = 9
m_x = 3
m_y = 3
snr_data_db = 0

[optimizer]
method = ao
starts = 3

[run]
seed = 77
""")
    assert config.scenario.m == 9
    assert config.scenario.snr_data_db == 0.0
    assert config.scenario.snr_pilot_db == 6.0  # untouched default
    assert config.optimizer.method == "ao"
    assert config.run.seed == 77


def test_grid_mismatch_rejected():
    with pytest.raises(ConfigError, match="grid mismatch"):
        load_config(text="[scenario]\nm_x = 7\nm_y = 7\nm = 50\n")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="no_such_key"):
        load_config(text="[scenario]\nno_such_key = 1\n")


def test_unknown_section_rejected():
    with pytest.raises(ConfigError, match="plotting"):
        load_config(text="[plotting]\ncolor = red\n")


def test_bad_value_rejected():
    with pytest.raises(ConfigError):
        load_config(text="[scenario]\nm_bs = many\n")


def test_pilot_length_must_cover_users():
    with pytest.raises(ConfigError, match="tau"):
        SystemConfig(tau=2, num_users=4)


def test_tau_must_fit_coherence_block():
    with pytest.raises(ConfigError):
        SystemConfig(num_users=4, tau=200, tau_c=200)


def test_desk_scale_is_valid_and_small():
    config = desk_scale()
    assert config.scenario.m == 9
    assert config.scenario.bsim_layers == 2
    assert config.scenario.direct_blockage_db > 0


def test_config_hash_stable_and_sensitive():
    a = ExperimentConfig()
    b = ExperimentConfig()
    assert config_hash(a) == config_hash(b)
    c = a.replace(scenario=a.scenario.replace(snr_data_db=7.0))
    assert config_hash(c) != config_hash(a)
