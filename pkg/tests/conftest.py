import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hjmlin.curve import InitialCurve
from hjmlin.volatility import VolatilityFn

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def unit_g():
    return VolatilityFn.constant(1.0)


@pytest.fixture
def zero_g():
    return VolatilityFn.constant(0.0)


@pytest.fixture
def flat_curve():
    return InitialCurve.constant(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n].line())
