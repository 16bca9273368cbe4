import numpy as np
import pytest

from worstfa import GroundTruth, PairScoreTable, PldaScoreParams, generate_synthetic_table

# filled by test_acceptance, printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def two_pair_table():
    return PairScoreTable.from_pairs({("A", "X"): [0.1, 0.3], ("A", "Y"): [0.5, 0.7]})


@pytest.fixture(scope="session")
def small_plda_table():
    gt = GroundTruth(PldaScoreParams.from_d([0.4, 0.8, 1.6, 3.2]), 30, 8, seed=1)
    return generate_synthetic_table(gt)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
