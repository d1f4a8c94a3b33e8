import sys

import numpy as np
import pytest

from poissoncluster import catalog


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def pairs_model():
    return catalog.gaussian_pairs_model()


@pytest.fixture(scope="session")
def delta_model():
    return catalog.delta_model()


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    lines = getattr(mod, "SUMMARY", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
