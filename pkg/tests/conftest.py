import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from specband.cli import build_problem, load_problem_file

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_CRITERIA: dict = {}


@pytest.fixture(scope="session")
def criteria():
    """Record acceptance outcomes; printed in the terminal summary."""
    return _CRITERIA


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        ok, detail = _CRITERIA[key]
        terminalreporter.write_line(f"criterion {key:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def bundled():
    """The shipped benchmark problems, built once."""
    return {name: build_problem(load_problem_file(name)) for name in ("poisson", "taylor", "airy", "tenth")}


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
