import numpy as np
import pytest

from rgbd_inpaint.data import Dataset


@pytest.fixture(scope="session")
def tiny_dataset():
    return Dataset.synthetic(6, 16, seed=4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
