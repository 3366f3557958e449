from __future__ import annotations

import pytest

from ctxbubble.fixture import FIXTURE_QUERY, fixture_config, fixture_corpus

_criteria: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria[number] = (title, "PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, status, detail = _criteria[number]
        line = f"[{status}] criterion {number}: {title}"
        terminalreporter.write_line(f"{line}  ({detail})" if detail else line)


@pytest.fixture(scope="session")
def corpus():
    return fixture_corpus()


@pytest.fixture(scope="session")
def config():
    return fixture_config()


@pytest.fixture(scope="session")
def query():
    return FIXTURE_QUERY
