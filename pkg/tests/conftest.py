import sys
from pathlib import Path

import numpy as np
import pytest

from lesionseg import _accel

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).parent / "data"


@pytest.fixture(params=_accel.BACKENDS)
def backend(request):
    """Run a test once per kernel backend."""
    with _accel.use_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20221)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    setattr(item, "rep_" + rep.when, rep)
