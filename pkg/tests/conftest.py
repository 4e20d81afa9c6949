import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kslsda.grid import build_grid

settings.register_profile(
    "default",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")

SEEDS = (0, 1, 2)


@pytest.fixture
def grid6():
    return build_grid(6, 6.0, (-3.0, -3.0, -3.0))


@pytest.fixture
def grid12():
    return build_grid(12, 10.0, (-5.0, -5.0, -5.0))


@pytest.fixture(params=SEEDS)
def rng(request):
    return np.random.default_rng(request.param)


# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ok, lines = ACCEPTANCE.get(criterion, (True, []))
    ACCEPTANCE[criterion] = (ok and bool(passed), lines + [detail])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        ok, lines = ACCEPTANCE[c]
        tr.write_line(f"criterion {c}: {'PASS' if ok else 'FAIL'} | " + "; ".join(lines))
