import math
import sys

import numpy as np
import pytest

from fracns.spectral import Lattice, random_field


@pytest.fixture
def lat4():
    return Lattice(N=4)


@pytest.fixture
def lat8():
    return Lattice(N=8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def field4(lat4, rng):
    return random_field(lat4, rng, norm=1.0, slope=1.0)


def rel(a, b):
    """Relative difference with a unit floor on the scale."""
    return abs(a - b) / max(abs(b), 1e-300)


SQRT_PI = math.sqrt(math.pi)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
