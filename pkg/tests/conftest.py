import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pairstats.model import ChannelTransmissions, DarkCountRates, SetupModel  # noqa: E402

# values quoted for the measured source
ETA_H, ETA_A, ETA_B = 0.1212, 0.0145, 0.0162
D_H, D_A, D_B = 2.5e-7, 2.87e-4, 3.84e-4
MU_LOW_POWER = 0.02375


@pytest.fixture
def measured_darks():
    return DarkCountRates(D_H, D_A, D_B)


@pytest.fixture
def measured_setup(measured_darks):
    return SetupModel(ChannelTransmissions(ETA_H, ETA_A, ETA_B), measured_darks)


def pytest_terminal_summary(terminalreporter):
    results = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
