import sys

import numpy as np
import pytest

from spectral_grasp.contacts import parallel_jaw
from spectral_grasp.shapes import sample_box, sample_sphere


@pytest.fixture(scope="session")
def jaw():
    return parallel_jaw(stroke=(0.0, 0.07))


@pytest.fixture(scope="session")
def box_cloud():
    return sample_box(0.04, 10000)


@pytest.fixture(scope="session")
def big_sphere():
    # 0.12 m diameter, wider than the 0.07 m stroke
    return sample_sphere(0.06, 10000)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
