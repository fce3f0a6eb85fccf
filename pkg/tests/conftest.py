import numpy as np
import pytest
from hypothesis import settings

from optospring.params import OpticalFieldInput, derive_field, sample_config

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def sample():
    return sample_config(1064e-9)


@pytest.fixture
def sample_lossy():
    return sample_config(1064e-9, eta=0.99, epsilon_ppm=30.0)


@pytest.fixture
def blue(sample):
    return sample.optical_fields()[0]


@pytest.fixture
def red(sample):
    return sample.optical_fields()[1]


def make_field(delta_hz=-1e6, gamma_hz=1e6, p=0.1, eps=0.0, L=1e-3, lam=1064e-9, label="f"):
    return derive_field(OpticalFieldInput(label, L=L, lambda0=lam, Delta_hz=delta_hz, gamma_hz=gamma_hz,
                                          P_circ=p, epsilon_ppm=eps))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
