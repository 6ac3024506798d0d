import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gpe2d.basis import TensorBasis2D

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def basis10():
    return TensorBasis2D.build(10)


@pytest.fixture(scope="session")
def basis16():
    return TensorBasis2D.build(16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    mark = item.get_closest_marker("acceptance")
    if mark is not None and (report.when == "call" or report.outcome != "passed"):
        number, title = mark.args
        detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        item.config.stash[_ACCEPTANCE_KEY].append(
            (number, title, report.outcome, detail))
    return report


def pytest_terminal_summary(terminalreporter, config):
    rows = config.stash.get(_ACCEPTANCE_KEY, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, outcome, detail in sorted(rows, key=lambda r: r[0]):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        line = f"criterion {number} [{verdict}] {title}"
        terminalreporter.write_line(line + (f" :: {detail}" if detail else ""))
