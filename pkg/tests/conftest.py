import numpy as np
import pytest
from hypothesis import settings

from horolab.algebraic import AlgebraicBackend

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

# filled by test_acceptance, printed at the end of the session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def alg():
    return AlgebraicBackend()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
