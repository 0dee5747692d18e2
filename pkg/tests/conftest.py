import numpy as np
import pytest

from nbrcache.graph import build_graph, erdos_renyi, preferential_attachment
from nbrcache.storage import LatencyModel, TieredStore


@pytest.fixture
def star():
    """Symmetrized star: center 0, leaves 1..4."""
    return build_graph([(0, i) for i in range(1, 5)], 5, symmetrize=True)


@pytest.fixture
def path3():
    return build_graph([(0, 1), (1, 2)], 3, symmetrize=True)


@pytest.fixture(scope="session")
def er100():
    return erdos_renyi(100, 0.2, seed=9)


@pytest.fixture(scope="session")
def er500():
    return erdos_renyi(500, 0.05, seed=3)


@pytest.fixture(scope="session")
def ba2000():
    return preferential_attachment(2000, 5, seed=2)


@pytest.fixture
def unit_store():
    def make(n, **kw):
        return TieredStore(n, latency=LatencyModel(scale=1.0), **kw)

    return make


def degree20_graph(n_extra=0):
    """Node 0 linked to nodes 1..20 (symmetrized), plus optional extra nodes."""
    return build_graph([(0, i) for i in range(1, 21)], 21 + n_extra, symmetrize=True)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
