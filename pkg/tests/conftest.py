import datetime as dt

import pytest

from stackctl.manifest import fixture_path, load_manifest

TODAY = dt.date(2017, 10, 15)


@pytest.fixture(scope="session")
def versioned():
    return load_manifest(fixture_path("rocker-versioned.manifest"))


@pytest.fixture(scope="session")
def testing():
    return load_manifest(fixture_path("rocker-testing.manifest"))


@pytest.fixture
def today():
    return TODAY



def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
