import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from crindex.domains import builtin, complex_ellipsoid, worm  # noqa: E402
from crindex.indices import weak_set  # noqa: E402


@pytest.fixture(scope="session")
def ball2():
    return builtin("ball", n=2)


@pytest.fixture(scope="session")
def worm2():
    return worm(2.0)


@pytest.fixture(scope="session")
def worm_sigma(worm2):
    return weak_set(worm2, samples=2000, seed=0)


@pytest.fixture(scope="session")
def cellipse():
    return complex_ellipsoid(2, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
