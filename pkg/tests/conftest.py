import pathlib

import numpy as np
import pytest

from kprox.casefile import parse_dynamic_params, parse_matpower_case
from kprox.network import reduce_case, smib_network

FIXTURES = pathlib.Path(__file__).parent / "fixtures"

# acceptance tests append "ACCEPTANCE <k> PASS/FAIL: ..." lines here;
# the terminal-summary hook replays them so they survive output capture
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def case14():
    return parse_matpower_case((FIXTURES / "case14.m").read_text())


@pytest.fixture(scope="session")
def dyn14(case14):
    return parse_dynamic_params((FIXTURES / "dynamics14.json").read_text(), case14)


@pytest.fixture(scope="session")
def net14(case14, dyn14):
    return reduce_case(case14, dyn14)


@pytest.fixture(scope="session")
def smib():
    # single machine against an infinite bus, moderate parameters
    return smib_network(m=1.0, gamma=1.0, sigma=1.0, P=0.5, k=1.0, phi=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
