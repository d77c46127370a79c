import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ccdispatch.vpp import GenConfig, assemble_compact, generate_instance, sample_input, sample_scenarios

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def inst2():
    return generate_instance(GenConfig(n_prosumers=2), seed=3)


@pytest.fixture(scope="session")
def inst4():
    return generate_instance(GenConfig(n_prosumers=4), seed=11)


@pytest.fixture(scope="session")
def cp4(inst4):
    return assemble_compact(inst4)


@pytest.fixture(scope="session")
def point4(inst4):
    """(x, in-sample, out-sample) for the four-prosumer fleet."""
    x = sample_input(inst4, seed=5)
    return x, sample_scenarios(inst4, x, 40, seed=6), sample_scenarios(inst4, x, 200, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(RESULTS):
            terminalreporter.write_line(line)
