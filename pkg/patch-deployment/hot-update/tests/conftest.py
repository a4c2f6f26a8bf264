import os
import sys

import pytest

HOT_UPDATE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.dirname(HOT_UPDATE_DIR))
sys.path.insert(0, HOT_UPDATE_DIR)

from .util import FIXTURES_DIR, compile_fixture, fixture_path  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end scenario of the hot-update pipeline")
    config.addinivalue_line("markers", "stress: long randomized schedules")
    config.addinivalue_line("markers", "network: opens loopback sockets")


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES_DIR


@pytest.fixture(scope="session")
def sshd_bundle():
    return compile_fixture('sshd', 'sshd-ca-2002-18.patch')


@pytest.fixture(scope="session")
def fleet_config_path():
    return fixture_path('fleet.yaml')
