import numpy as np
import pytest

from contin_assort import Instance, PreferenceFunction, ProfitCurve, make_bimodal_instance


@pytest.fixture(scope="session")
def bimodal():
    return make_bimodal_instance(1.0)


@pytest.fixture(scope="session")
def bimodal_half():
    return make_bimodal_instance(0.5)


def flat_instance(value=1.0, c=1.0):
    return Instance(PreferenceFunction.constant(value), ProfitCurve.identity(), c)


@pytest.fixture
def flat():
    return flat_instance()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
