import numpy as np
import pytest

from ncsim.linalg import ContinuousPlant

ACCEPTANCE_LINES: list[str] = []


def random_plant(rng, n=None, m=None) -> ContinuousPlant:
    n = n or int(rng.integers(1, 5))
    m = m or int(rng.integers(1, 3))
    return ContinuousPlant(
        a=rng.uniform(-1, 1, (n, n)),
        b=rng.uniform(-1, 1, (n, m)),
        c=np.eye(n),
    )


@pytest.fixture
def integrator():
    return ContinuousPlant(a=[[0.0]], b=[[1.0]], c=[[1.0]])


@pytest.fixture
def double_integrator():
    return ContinuousPlant(a=[[0.0, 1.0], [0.0, 0.0]], b=[[0.0], [1.0]], c=np.eye(2))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        number, title = marker.args
        status = "PASS" if report.passed else "FAIL"
        ACCEPTANCE_LINES.append(f"criterion {number:>2} {status}  {title}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
