import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from irlteach.env import build_env  # noqa: E402


@pytest.fixture(scope="session")
def small_env():
    """One road of each type."""
    return build_env(seed=11, roads_per_type=1)


@pytest.fixture(scope="session")
def car_env():
    """Default-size environment: 40 roads."""
    return build_env(seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
