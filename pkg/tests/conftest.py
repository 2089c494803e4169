import sys
import time
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

DATA = Path(__file__).parent / "data"
SUITE_BUDGET_S = 300.0
_start = time.perf_counter()

# fixed example generation keeps the default run reproducible;
# `pytest --hypothesis-profile=explore` draws fresh random examples
settings.register_profile("fixed", derandomize=True)
settings.register_profile("explore", derandomize=False)
settings.load_profile("fixed")


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_sessionfinish(session, exitstatus):
    session.config._suite_elapsed = time.perf_counter() - _start
    # the runtime budget applies to the whole default suite, not to partial runs
    if session.config._suite_elapsed > SUITE_BUDGET_S and not session.config.args[1:]:
        session.exitstatus = pytest.ExitCode.TESTS_FAILED


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    elapsed = getattr(config, "_suite_elapsed", time.perf_counter() - _start)
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
    mark = "PASS" if elapsed <= SUITE_BUDGET_S else "FAIL"
    terminalreporter.write_line(f"[{mark}] criterion 12 runtime: this pytest session took {elapsed:.1f}s "
                                f"(budget {SUITE_BUDGET_S:.0f}s)")
