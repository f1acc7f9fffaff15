import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cbadapt.channel import ArrayGeometry, ScenarioConfig, generate_channel
from cbadapt.config import ExperimentConfig
from cbadapt.dataset import build_rows, from_rows

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=300)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

DESK_SIZE = 2000


@pytest.fixture
def geometry():
    return ArrayGeometry(4, 2)


@pytest.fixture
def small_channel(geometry):
    sc = ScenarioConfig(num_rays=6, num_rb=8, num_slot=6, doppler_max_hz=50.0)
    return generate_channel(geometry, sc, 11)


@pytest.fixture(scope="session")
def desk_config():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def desk_rows(desk_config):
    """Header and rows of the D=2000 desk-scale dataset, built once per session (~40 s)."""
    return build_rows(desk_config, DESK_SIZE)


@pytest.fixture(scope="session")
def desk_dataset(desk_rows, desk_config):
    return from_rows(*desk_rows).with_split(desk_config.train.split, desk_config.seed)


def rand_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one (criterion, passed, detail) entry per acceptance check, echoed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE, key=lambda e: e[0]):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
