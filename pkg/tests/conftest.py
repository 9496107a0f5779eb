from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"

_acceptance = {}


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and (report.when == "call" or report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        if name not in _acceptance or report.outcome != "passed":
            _acceptance[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance):
        status = "PASS" if _acceptance[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")
