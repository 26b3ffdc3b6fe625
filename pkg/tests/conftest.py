import numpy as np
import pytest

from iqc_lmi.builder import analyze
from iqc_lmi.network import CyclicNetwork, auxiliary_plant, example_recipe


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long simulations")


@pytest.fixture(scope="session")
def net_plant():
    return auxiliary_plant(CyclicNetwork())


@pytest.fixture(scope="session")
def net_analyses(net_plant):
    """Certified runs of the network example for nu = 0, 1, 2."""
    out = {}
    for nu in (0, 1, 2):
        recipe = example_recipe(nu)
        out[nu] = (recipe, analyze(net_plant, recipe, performance=True))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
