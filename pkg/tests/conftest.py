import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oiltune import detection, harness, plant  # noqa: E402


@pytest.fixture(scope="session")
def plant_cfg():
    return plant.PlantConfig()


@pytest.fixture(scope="session")
def channel():
    return detection.ChannelConfig()


@pytest.fixture(scope="session")
def fixture_doc():
    return harness.load_fixture()


@pytest.fixture(scope="session")
def optimum(fixture_doc):
    return plant.ControlParams.from_dict(fixture_doc["optimum"])


ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, passed, detail)``."""

    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
