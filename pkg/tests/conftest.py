import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from crdnn.synth import generate_dataset

settings.register_profile("default", deadline=None, suppress_health_check=(HealthCheck.too_slow,))
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# filled by test_acceptance, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_dataset():
    return generate_dataset(seed=7, total_cycles=12)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
