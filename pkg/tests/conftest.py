import math

import pytest
from hypothesis import HealthCheck, settings

from suntracker.motor_plant import MotorParams

settings.register_profile("default", max_examples=100, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

STEP_TARGET_RAD = math.radians(0.48)


@pytest.fixture(scope="session")
def motor() -> MotorParams:
    return MotorParams()


def pytest_terminal_summary(terminalreporter):
    from _acceptance_report import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(LINES):
            terminalreporter.write_line(LINES[number])
