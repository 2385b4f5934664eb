import math
import os
import sys

import pytest
from hypothesis import HealthCheck, settings

from macopt.battery import DischargeModel, UserParams

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=15, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

LN2 = math.log(2.0)


def ref_user(r: float) -> UserParams:
    """Reference scenario user: B = 1.25, gamma = 0.5."""
    model = DischargeModel.ideal() if r == 0 else DischargeModel.quadratic(r)
    return UserParams(1.25, 0.5, model)


@pytest.fixture
def make_user():
    return ref_user


def pytest_terminal_summary(terminalreporter):
    # acceptance criteria record one line each while they run
    mod = sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
