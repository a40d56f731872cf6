import numpy as np
import pytest
from hypothesis import settings

from kinmoment.basis import parse_basis

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(scope="session", params=["m10", "hfm10", "pmm10"])
def basis(request):
    return parse_basis(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_addoption(parser):
    parser.addoption("--run-long", action="store_true", help="also run the multi-hour checks marked 'long'")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-long"):
        return
    skip = pytest.mark.skip(reason="multi-hour run; enable with --run-long")
    for item in items:
        if "long" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "criterion_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
