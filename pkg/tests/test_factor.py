import numpy as np
import pytest

from treesaddle.errors import DimensionError, NotPositiveDefiniteError, SingularBlockError
from treesaddle.factor import SolveCounter, factorize, solve, solve_transpose


def test_identity_and_2x2():
    f = factorize(np.eye(3))
    b = np.array([1.0, 2.0, 3.0])
    assert np.array_equal(solve(f, b), b)
    c = factorize(np.array([[2.0, 1.0], [1.0, 2.0]]), "cholesky")
    assert np.allclose(solve(c, [3.0, 3.0]), [1.0, 1.0], atol=1e-15)


def test_random_spd_residual(rng):
    G = rng.standard_normal((50, 50))
    M = G @ G.T + 50 * np.eye(50)
    b = rng.standard_normal(50)
    for kind in ("lu", "cholesky"):
        x = solve(factorize(M, kind), b)
        assert np.linalg.norm(M @ x - b) / np.linalg.norm(b) <= 1e-10


def test_transpose_solves(rng):
    S = rng.standard_normal((6, 6))
    S = S + S.T + 20 * np.eye(6)
    f = factorize(S)
    b = rng.standard_normal(6)
    assert np.allclose(solve(f, b), solve_transpose(f, b), atol=1e-12)
    M = rng.standard_normal((10, 10)) + 5 * np.eye(10)
    f = factorize(M)
    assert np.allclose(solve_transpose(f, b.repeat(2)[:10]), np.linalg.solve(M.T, b.repeat(2)[:10]), atol=1e-10)


def test_counter_counts_columns():
    c = SolveCounter()
    f = factorize(np.eye(4), tag=7, counter=c)
    f.solve(np.ones(4))
    f.solve(np.ones((4, 3)))
    with c.scope("iteration"):
        f.solve_transpose(np.ones((4, 2)))
    assert c.counts()[7] == 6
    assert c.total("setup") == 4 and c.total("iteration") == 2
    assert c.phase == "setup"
    # untagged factorizations are free
    g = factorize(np.eye(2), counter=c)
    g.solve(np.ones(2))
    assert c.total() == 6
    c.reset()
    assert c.total() == 0


def test_errors():
    with pytest.raises(SingularBlockError):
        factorize(np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(NotPositiveDefiniteError):
        factorize(np.array([[1.0, 0.0], [0.0, -1.0]]), "cholesky")
    with pytest.raises(DimensionError):
        factorize(np.ones((2, 3)))
    with pytest.raises(DimensionError):
        factorize(np.eye(2)).solve(np.ones(3))


def test_deterministic_counts():
    def run():
        c = SolveCounter()
        f = factorize(np.eye(3), tag=1, counter=c)
        for k in range(5):
            f.solve(np.ones((3, k + 1)))
        return c.snapshot()
    assert run() == run() == {"total": 15, "by_phase": {"setup": 15}}
