import numpy as np
import pytest

from mdpgn.mdp import random_mdp
from mdpgn.policies import GibbsPolicy

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_instance():
    r = np.random.default_rng(7)
    mdp = random_mdp(r, 4, 3, 0.9)
    pol = GibbsPolicy(r.normal(size=(4, 3, 3)))
    return mdp, pol, r.normal(size=3)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
