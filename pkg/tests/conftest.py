import pytest

from simstack import Scenario, desk_scale
from simstack.rng import stream


@pytest.fixture(scope="session")
def desk_config():
    return desk_scale(num_users=2).scenario


@pytest.fixture(scope="session")
def desk_scenario(desk_config):
    return Scenario(desk_config)


@pytest.fixture()
def rng():
    return stream(1234, "tests")
