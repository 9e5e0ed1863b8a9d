import numpy as np
import pytest

from treesaddle.blocks import make_system
from treesaddle.tree import build_tree

# nine vertices, inner vertices 1, 2, 4
NINE_ARCS = [(1, 2), (1, 3), (1, 4), (2, 5), (2, 6), (4, 7), (4, 8), (4, 9)]


def unit_system(tree, D=0.0):
    """All blocks 1x1: B_i = 1, E = 1, D_k = D, zero right-hand side."""
    one = np.ones((1, 1))
    B = {i: one for i in tree.vertices}
    h = {i: np.zeros(1) for i in tree.vertices}
    arcs = range(1, tree.n_arcs + 1)
    return make_system(tree, B, h, {k: one for k in arcs}, {k: one for k in arcs},
                       {k: D * one for k in arcs}, {k: np.zeros(1) for k in arcs})


@pytest.fixture
def cherry_tree():
    return build_tree([(3, 1), (3, 2)])


@pytest.fixture
def nine_tree():
    return build_tree(NINE_ARCS)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
