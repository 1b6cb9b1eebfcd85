import numpy as np
import pytest

from canodual import FixedPointProblem, QuarticTerm, load_example

_CRITERIA = {}


@pytest.fixture(scope="session")
def ex1():
    return load_example("example1")


@pytest.fixture(scope="session")
def ex2():
    return load_example("example2")


@pytest.fixture(scope="session")
def ex3():
    return load_example("example3")


@pytest.fixture
def quartic_1d():
    # f = 0, D = [1], beta = 1, lambda = 2
    return FixedPointProblem(f=[0.0], terms=[QuarticTerm([[1.0]], beta=1.0, lam=2.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    k = marker.args[0]
    ok = call.excinfo is None
    _CRITERIA.setdefault(k, []).append((item.name, ok))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        results = _CRITERIA[k]
        status = "PASS" if all(ok for _, ok in results) else "FAIL"
        failed = [name for name, ok in results if not ok]
        detail = f" (failing: {', '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"criterion {k}: {status}{detail}")
