import numpy as np
import pytest

from mofgcn import AtomGraph, ModelConfig, MofGCN

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def triangle():
    return AtomGraph.from_edges([0, 1, 2], [(0, 1, 0.5), (1, 2, 0.8), (0, 2, 1.1)])


def random_triangle(rng, types=(0, 1, 2)):
    r = rng.uniform(0.05, 1.0, size=3)
    return AtomGraph.from_edges(list(types), [(0, 1, r[0]), (1, 2, r[1]), (0, 2, r[2])])


def small_model(pooling="sum", seed=0, **kw):
    cfg = ModelConfig(vocab=["A", "B", "C"], pooling=pooling, conv_hidden=[8, 8], readout_hidden=[6], **kw)
    return MofGCN(cfg, seed=seed)
