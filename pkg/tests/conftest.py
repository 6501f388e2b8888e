import numpy as np
import pytest

from nilpw.catalog import PRESETS, get_group


@pytest.fixture(params=PRESETS)
def bundle(request):
    return get_group(request.param)


@pytest.fixture
def heis():
    return get_group("heisenberg")


@pytest.fixture
def engel():
    return get_group("engel")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    return request.config.stash.setdefault(_LINES, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
