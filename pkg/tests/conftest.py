import numpy as np
import pytest
from hypothesis import settings

from collab_act.trajectory_store import generate_synthetic_dataset

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_dataset():
    return generate_synthetic_dataset(0, 6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line; a test that raises before reporting counts as FAIL."""
    number = request.node.get_closest_marker("criterion").args[0]
    ACCEPTANCE[number] = (False, "did not complete")

    def report(ok, detail):
        ACCEPTANCE[number] = (bool(ok), detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return report


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
