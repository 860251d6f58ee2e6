import logging
import sys

import pytest

logging.getLogger("coneflow").setLevel(logging.ERROR)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance")
    for num in sorted(results):
        terminalreporter.write_line(results[num][1])


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(20240611)
