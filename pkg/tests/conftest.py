import numpy as np
import pytest

from gpsfeed.model import PipelineConfig
from gpsfeed.synth import SyntheticScenario, random_schedule, straight_route, write_fixture

EPOCH_2024_01_15 = 1705305600.0  # 2024-01-15T08:00:00Z

_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and report.passed:
        return
    number, title = marker.args
    previous = _criteria.get(number, ("PASS", title))[0]
    status = "PASS" if report.passed and previous == "PASS" else "FAIL"
    _criteria[number] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        status, title = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")


@pytest.fixture(scope="session")
def route():
    return straight_route()


@pytest.fixture
def config():
    return PipelineConfig(worker_count=1)


@pytest.fixture(scope="session")
def small_fixture(tmp_path_factory, route):
    """Two devices, ten trips, written in ingestion formats."""
    rng = np.random.default_rng(7)
    plans = random_schedule(route, ["bus-01", "bus-02"], 5, EPOCH_2024_01_15, rng, align=5)
    scenario = SyntheticScenario(route, plans, sampling_interval_s=5.0)
    out = tmp_path_factory.mktemp("fixture")
    paths, records, truth = write_fixture(scenario, out)
    return paths, records, truth
