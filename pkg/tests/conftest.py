import json
from pathlib import Path

import pytest

from vtcontrol.problem import make_example_field, potential

ORACLE = json.loads((Path(__file__).parent / "oracles" / "frozen.json").read_text())

# criterion number -> (passed, detail); filled by test_acceptance
CRITERIA: dict[int, tuple[bool, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: takes more than a few seconds")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        ok, detail = CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def oracle():
    return ORACLE


@pytest.fixture(scope="session")
def minus_field():
    return make_example_field(1.0, 2.0, "-", L=2.0)


@pytest.fixture(scope="session")
def plus_field():
    return make_example_field(1.0, 2.0, "+", L=2.0)


@pytest.fixture(scope="session")
def minus_pot(minus_field):
    return potential(minus_field)


@pytest.fixture(scope="session")
def plus_pot(plus_field):
    return potential(plus_field)
