import numpy as np
import pytest

from ris_mimo.channel import ChannelSet
from ris_mimo.reflector import ReflectorQuadratic


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_channels(rng, n, nt, nr):
    return ChannelSet(crandn(rng, n, nt), crandn(rng, n, nr), crandn(rng, nr, nt))


def random_unit(rng, n):
    return np.exp(2j * np.pi * rng.random(n))


def random_quadratic(rng, n, ns=2):
    """I.i.d. Gaussian reflector instance with ``N_s * N`` rows."""
    m = ns * n
    return ReflectorQuadratic(crandn(rng, m), crandn(rng, m, n) / np.sqrt(m))


def random_pd(rng, k, floor=0.1):
    a = crandn(rng, k, k)
    return a @ a.conj().T + floor * np.eye(k)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
