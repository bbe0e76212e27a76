import functools
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from storage_screening.investment import percent_to_capacity, solve_storage_case  # noqa: E402
from storage_screening.market import (  # noqa: E402
    Affine, GenerationTech, LoadGrid, MeritOrder, TechSet, screening_capacities,
)

UNIFORM = LoadGrid.uniform(0.0, 100.0, 101)
LINEAR = Affine(20.0, 1.5)
TABLE1 = TechSet(
    [GenerationTech("L", 50, 185), GenerationTech("M", 100, 150), GenerationTech("H", 300, 70)],
    voll=1000,
)


def worked_curve():
    return MeritOrder(screening_capacities(TABLE1, UNIFORM))


@functools.lru_cache(maxsize=None)
def linear_case(pct, discount=0.999, n_states=101):
    return solve_storage_case(LINEAR, UNIFORM, percent_to_capacity(pct, UNIFORM),
                              n_states=n_states, discount=discount)


@functools.lru_cache(maxsize=None)
def worked_case(pct, discount=0.999):
    return solve_storage_case(worked_curve(), UNIFORM, percent_to_capacity(pct, UNIFORM),
                              discount=discount)


@pytest.fixture(scope="session")
def linear10():
    return linear_case(10)


@pytest.fixture(scope="session")
def linear20():
    return linear_case(20)


@pytest.fixture(scope="session")
def linear150():
    return linear_case(150)


def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
