import warnings
from pathlib import Path

import numpy as np
import pytest

from cqlqg.instances import random_luenberger_instance

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"

# (n, m1, m2, p1, p2); every shape satisfies m2 + p1 >= n
POOL_DIMS = [(2, 2, 2, 2, 2), (2, 4, 2, 2, 2), (4, 4, 4, 4, 4), (4, 4, 4, 2, 2), (4, 6, 4, 4, 2)]
POOL_SIZE = 200


@pytest.fixture(autouse=True)
def _quiet_data_quality():
    # projection notices from random draws are expected noise here
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        yield


@pytest.fixture(scope="session")
def luenberger_pool():
    """Stable feasible Luenberger instances ``(plant, gains, d, alg)``."""
    rng = np.random.default_rng(20240611)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return [random_luenberger_instance(rng, POOL_DIMS[i % len(POOL_DIMS)])
                for i in range(POOL_SIZE)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def fixture_path(name):
    return FIXTURES / name


# -- acceptance summary ----------------------------------------------------------

_acceptance_key = pytest.StashKey[list]()


@pytest.fixture
def acceptance_line(request):
    """Record the one-line verdict of an acceptance criterion."""
    lines = request.config.stash.setdefault(_acceptance_key, [])

    def record(number, title, passed, detail):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        lines.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_acceptance_key, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
