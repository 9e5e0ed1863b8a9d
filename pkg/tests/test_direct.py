import time

import numpy as np
import pytest

import oracles
from conftest import unit_system
from treesaddle.blocks import BlockFactors, make_system
from treesaddle.direct import compute_arrowhead_schur, solve_direct
from treesaddle.errors import NotPositiveDefiniteError
from treesaddle.factor import SolveCounter
from treesaddle.problems import gen_random_system
from treesaddle.tree import build_tree, full_tree, path_tree, star_tree


def _direct(sys, b=None):
    c = SolveCounter()
    fac = BlockFactors(sys, c)
    schur = compute_arrowhead_schur(sys, fac)
    with c.scope("solve"):
        x = solve_direct(sys, schur, sys.rhs() if b is None else b)
    return x, schur, c


def test_cherry_unit_schur(cherry_tree):
    sys = unit_system(cherry_tree)
    s = compute_arrowhead_schur(sys)
    assert np.allclose(s.S[3], [[2.0, 1.0], [1.0, 2.0]], atol=1e-15)
    assert np.allclose(s.S[3], oracles.subtree_schur(sys, 3), atol=1e-14)


def test_single_vertex():
    t = build_tree([], n_vertices=1)
    B = np.array([[3.0, 1.0], [1.0, 2.0]])
    sys = make_system(t, {1: B}, {1: np.array([1.0, 0.0])})
    x, schur, c = _direct(sys)
    assert schur.S == {}
    assert np.allclose(x, np.linalg.solve(B, [1.0, 0.0]))
    assert c.total("solve") == 1


def test_schur_blocks_match_subtree_oracle():
    sys = gen_random_system(full_tree(2, 3), seed=11)
    s = compute_arrowhead_schur(sys)
    for i in sys.tree.inner_vertices:
        ref = oracles.subtree_schur(sys, i)
        assert np.linalg.norm(s.S[i] - ref) <= 1e-9 * np.linalg.norm(ref)
        assert np.array_equal(s.S[i], s.S[i].T)


def test_star_counts_and_oracle():
    sys = gen_random_system(star_tree(4), seed=2)
    x, _, c = _direct(sys)
    ref = np.linalg.solve(oracles.dense_rows(sys), oracles.global_rhs(sys))
    assert np.linalg.norm(x - ref) <= 1e-9 * np.linalg.norm(ref)
    counts = c.counts("solve")
    assert all(counts[v] == 2 for v in sys.tree.leaves)


@pytest.mark.parametrize("d", [2, 3, 4, 5, 6])
def test_path_growth(d):
    sys = gen_random_system(path_tree(d + 1), seed=d, l_range=(1, 1))
    _, _, c = _direct(sys)
    counts = c.counts("solve")
    leaf = sys.tree.leaves[0]
    assert counts[leaf] == 2 ** d
    assert c.total("solve") == 2 ** d + sum(2 * 2 ** k for k in range(d))


def test_exact_visit_counts_and_setup_bound():
    sys = gen_random_system(full_tree(2, 5), seed=5, n_range=(2, 4), l_range=(1, 2))
    x, _, c = _direct(sys)
    t = sys.tree
    solve_counts = c.counts("solve")
    setup_counts = c.counts("setup")
    for v in t.vertices:
        mult = 1 if t.is_leaf(v) else 2
        assert solve_counts[v] == mult * 2 ** t.depth[v]
        assert setup_counts[v] <= sys.m_out(v) + 2 * sys.m_in(v)


def test_oracle_equivalence_50_instances():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    for s in range(50):
        n = int(rng.integers(1, 16))
        parents = [int(rng.integers(1, v)) for v in range(2, n + 1)]
        tree = build_tree([(p, v) for v, p in zip(range(2, n + 1), parents)], n_vertices=n)
        sys = gen_random_system(tree, n_range=(3, 8), l_range=(1, 3), seed=s)
        x, _, _ = _direct(sys)
        ref = np.linalg.solve(oracles.dense_rows(sys), oracles.global_rhs(sys))
        assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)
    assert time.perf_counter() - t0 < 10.0


def test_indefinite_schur_reported(cherry_tree):
    one = np.ones((1, 1))
    sys = make_system(cherry_tree, {1: one, 2: one, 3: -one}, None,
                      {1: one, 2: one}, {1: one, 2: one})
    with pytest.raises(NotPositiveDefiniteError) as exc:
        compute_arrowhead_schur(sys)
    assert exc.value.tag == 3
