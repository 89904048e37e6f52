import numpy as np
import pytest

from hyperaod.datapipe import synth_granule

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_scene():
    return synth_granule(7, 192, 288, 8)


@pytest.fixture
def criterion(request):
    """Records one acceptance line; a test that dies before recording counts as FAIL."""
    lines = request.config.stash[_ACCEPTANCE]
    state = {}

    def record(name: str, ok: bool, detail: str = "") -> bool:
        state["done"] = True
        line = f"{name} {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        lines.append(line)
        print(line)
        return ok

    yield record
    if not state:
        name = request.node.name.split("_")[1].upper()
        lines.append(f"{name} FAIL  raised before reporting")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash[_ACCEPTANCE]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
