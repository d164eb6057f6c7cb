import math

import numpy as np
import pytest

from tangency.map_core import MapParams

GOLDEN = (math.sqrt(5.0) + 1.0) / 2.0
ALPHA_BIG = 2.0 * math.sqrt(8.0 * math.pi)

_criteria: dict[int, tuple[str, str]] = {}


def corner_params():
    """The twelve (tau, eps, alpha) corners used by the property checks."""
    return [MapParams(epsilon=e, alpha=a, omega=0.7, tau=t)
            for t in (1, -1) for e in (0.0, 0.01, 0.3) for a in (1.0, ALPHA_BIG)]


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, text = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        prev = _criteria.get(n)
        if prev is None or prev[0] == "PASS":
            _criteria[n] = (status, text)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        status, text = _criteria[n]
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {text}")
