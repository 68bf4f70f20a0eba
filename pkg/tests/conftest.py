"""Session-wide pipeline runs shared by the module tests and the acceptance suite.

The expensive cases (euler3 at eps = 0.05 takes about two minutes) are
computed once per session, on first use.
"""

import dataclasses
import time

import pytest

from shockforge.cli.pipeline import CaseSpec, lifespan_case, refit_shock, run_case

LIFESPAN_EPS = (0.2, 0.1, 0.05, 0.025)


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start


@pytest.fixture(scope="session")
def burgers_case():
    return run_case(CaseSpec("burgers", {}, 0, 0.1, data="sine"))


@pytest.fixture(scope="session")
def burgers_case_small():
    return run_case(CaseSpec("burgers", {}, 0, 0.05, data="sine"))


@pytest.fixture(scope="session")
def euler3_case():
    return run_case(CaseSpec("euler3", {}, None, 0.05, data="collision"))


@pytest.fixture(scope="session")
def euler3_refined(euler3_case):
    """Shock fit on the same characteristic grid with every mesh spacing halved."""
    base = euler3_case.spec.shock
    fine = dataclasses.replace(base, dz_max=base.dz_max / 2, z_ratio=1.025, level_ratio=1.025,
                               dt_max=base.dt_max / 2)
    return refit_shock(euler3_case, fine)


@pytest.fixture(scope="session")
def p_system_case():
    return run_case(CaseSpec("p_system", {}, None, 0.1), holder=False)


@pytest.fixture(scope="session")
def synthetic_case():
    return run_case(CaseSpec("synthetic_n", {}, None, 0.1), holder=False)


@pytest.fixture(scope="session")
def euler3_lifespans():
    """{eps: (CaseResult, seconds)} for the default euler3 data."""
    return {eps: timed(lifespan_case, CaseSpec("euler3", {}, None, eps)) for eps in LIFESPAN_EPS}


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
