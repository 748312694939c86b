import pytest

from app import create_app
from app.models.network import load_network, parse_network, with_horizon
from tests.networks import CANONICAL_PATH, pipe_network_data, reduced_network_data


@pytest.fixture(autouse=True)
def app():
    """Testing configuration applied to every service before each test."""
    return create_app(config_name='testing')


@pytest.fixture(scope='session')
def canonical():
    return load_network(CANONICAL_PATH)


@pytest.fixture(scope='session')
def canonical_k1(canonical):
    return with_horizon(canonical, 1)


@pytest.fixture
def reduced_data():
    return reduced_network_data()


@pytest.fixture(scope='session')
def reduced():
    return parse_network(reduced_network_data())


@pytest.fixture(scope='session')
def pipe_only():
    return parse_network(pipe_network_data())
