import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from glyphforge import _pykernels, kernels  # noqa: E402
from glyphforge.sampler import make_schedule  # noqa: E402

IMPLS = [pytest.param(_pykernels, id="python")]
if kernels.compiled_impl is not None:
    IMPLS.append(pytest.param(kernels.compiled_impl, id="cython"))


@pytest.fixture(params=IMPLS)
def impl(request):
    return request.param


@pytest.fixture(scope="session")
def schedule():
    return make_schedule(1000, 50)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title, budget_s): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
