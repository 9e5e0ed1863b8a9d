"""Tree-coupled saddle-point systems: storage, layouts, products.

The global unknown is ``(x, y)`` with the vertex blocks ``x_i`` stacked in
pre-order and the coupling blocks ``y_k`` stacked by arc id.  The matrix is

    [ B    C^T ]      B = blkdiag(B_i),  D = blkdiag(D_k),
    [ C    -D  ]      C[k, tail(k)] = E_out_k,  C[k, head(k)] = -E_in_k.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, NotPositiveDefiniteError, ValidationError
from .factor import Factorization, SolveCounter, factorize
from .tree import DirectedTree, subtree_vertices

__all__ = [
    "TreeCoupledSystem",
    "GlobalLayout",
    "BlockFactors",
    "make_system",
    "global_layout",
    "assemble_global",
    "matvec",
    "nested_permutation",
    "residual",
    "check_assumptions",
    "split",
    "join",
    "subtree_matvec",
]

SYM_TOL = 1e-12


@dataclass(frozen=True)
class TreeCoupledSystem:
    tree: DirectedTree
    B: dict[int, np.ndarray]
    h: dict[int, np.ndarray]
    E_out: dict[int, np.ndarray]
    E_in: dict[int, np.ndarray]
    D: dict[int, np.ndarray]
    f: dict[int, np.ndarray]
    layout: "GlobalLayout" = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "layout", global_layout(self))

    def n(self, i: int) -> int:
        return self.B[i].shape[0]

    def l(self, k: int) -> int:
        return self.D[k].shape[0]

    def m_out(self, i: int) -> int:
        return sum(self.l(k) for k in self.tree.out_arcs[i])

    def m_in(self, i: int) -> int:
        k = self.tree.in_arc.get(i)
        return 0 if k is None else self.l(k)

    def l_total(self, i: int) -> int:
        return self.m_out(i) + self.m_in(i)

    @property
    def order(self) -> int:
        return self.layout.n + self.layout.m

    def rhs(self) -> np.ndarray:
        return join(self, self.h, self.f)


@dataclass(frozen=True)
class GlobalLayout:
    x_offset: dict[int, int]
    y_offset: dict[int, int]
    n: int
    m: int

    def x_slice(self, i: int, sys: TreeCoupledSystem) -> slice:
        o = self.x_offset[i]
        return slice(o, o + sys.n(i))

    def y_slice(self, k: int, sys: TreeCoupledSystem) -> slice:
        o = self.y_offset[k]
        return slice(o, o + sys.l(k))


def _sym(name: str, M: np.ndarray) -> np.ndarray:
    M = np.array(M, dtype=float, ndmin=2)
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got {M.shape}")
    if M.size:
        nrm = np.linalg.norm(M)
        if np.linalg.norm(M - M.T) > SYM_TOL * max(nrm, 1e-300):
            raise ValidationError(f"{name} is not symmetric")
        M = 0.5 * (M + M.T)
    return M


def make_system(tree, B, h, E_out=None, E_in=None, D=None, f=None) -> TreeCoupledSystem:
    """Validate block shapes and symmetry and build a :class:`TreeCoupledSystem`.

    All block arguments are mappings keyed by vertex id (``B``, ``h``) or arc
    id (the rest).  Symmetric blocks are symmetrized after the tolerance check.
    """
    E_out, E_in, D, f = E_out or {}, E_in or {}, D or {}, f or {}
    Bs, hs, Eo, Ei, Ds, fs = {}, {}, {}, {}, {}, {}
    for i in tree.vertices:
        if i not in B:
            raise DimensionError(f"missing B block for vertex {i}")
        Bs[i] = _sym(f"B_{i}", B[i])
        n = Bs[i].shape[0]
        hi = np.zeros(n) if h is None or i not in h else np.asarray(h[i], dtype=float).ravel()
        if hi.shape != (n,):
            raise DimensionError(f"h_{i} has length {hi.shape[0]}, expected {n}")
        hs[i] = hi
    for k, (t, hd) in enumerate(tree.arcs, start=1):
        if k not in E_out or k not in E_in:
            raise DimensionError(f"missing coupling matrices for arc {k}")
        eo = np.array(E_out[k], dtype=float, ndmin=2)
        ei = np.array(E_in[k], dtype=float, ndmin=2)
        lk = eo.shape[0]
        if eo.shape != (lk, Bs[t].shape[0]):
            raise DimensionError(f"E_out_{k} has shape {eo.shape}, expected ({lk}, {Bs[t].shape[0]})")
        if ei.shape != (lk, Bs[hd].shape[0]):
            raise DimensionError(f"E_in_{k} has shape {ei.shape}, expected ({lk}, {Bs[hd].shape[0]})")
        Dk = np.zeros((lk, lk)) if k not in D else _sym(f"D_{k}", D[k])
        if Dk.shape != (lk, lk):
            raise DimensionError(f"D_{k} has shape {Dk.shape}, expected ({lk}, {lk})")
        fk = np.zeros(lk) if k not in f else np.asarray(f[k], dtype=float).ravel()
        if fk.shape != (lk,):
            raise DimensionError(f"f_{k} has length {fk.shape[0]}, expected {lk}")
        Eo[k], Ei[k], Ds[k], fs[k] = eo, ei, Dk, fk
    return TreeCoupledSystem(tree, Bs, hs, Eo, Ei, Ds, fs)


def global_layout(sys: TreeCoupledSystem) -> GlobalLayout:
    xo, yo = {}, {}
    off = 0
    for i in sys.tree.preorder:
        xo[i] = off
        off += sys.B[i].shape[0]
    n = off
    for k in range(1, sys.tree.n_arcs + 1):
        yo[k] = off
        off += sys.D[k].shape[0]
    return GlobalLayout(xo, yo, n, off - n)


def split(sys: TreeCoupledSystem, v) -> tuple[dict, dict]:
    """Cut a global vector into per-vertex and per-arc pieces (views)."""
    v = np.asarray(v, dtype=float)
    if v.shape != (sys.order,):
        raise DimensionError(f"vector of shape {v.shape}, expected ({sys.order},)")
    lay = sys.layout
    xs = {i: v[lay.x_slice(i, sys)] for i in sys.tree.vertices}
    ys = {k: v[lay.y_slice(k, sys)] for k in range(1, sys.tree.n_arcs + 1)}
    return xs, ys


def join(sys: TreeCoupledSystem, xs: dict, ys: dict) -> np.ndarray:
    out = np.empty(sys.order)
    lay = sys.layout
    for i in sys.tree.vertices:
        out[lay.x_slice(i, sys)] = xs[i]
    for k in range(1, sys.tree.n_arcs + 1):
        out[lay.y_slice(k, sys)] = ys[k]
    return out


def assemble_global(sys: TreeCoupledSystem) -> sp.csr_matrix:
    """Sparse symmetric matrix of order n+m in the global layout."""
    lay = sys.layout
    rows, cols, vals = [], [], []

    def put(r0, c0, M, mirror=False):
        if M.size == 0:
            return
        r, c = np.nonzero(np.ones_like(M, dtype=bool))
        rows.append(r + r0)
        cols.append(c + c0)
        vals.append(M.ravel())
        if mirror:
            rows.append(c + c0)
            cols.append(r + r0)
            vals.append(M.ravel())

    for i in sys.tree.vertices:
        put(lay.x_offset[i], lay.x_offset[i], sys.B[i])
    for k, (t, hd) in enumerate(sys.tree.arcs, start=1):
        yk = lay.y_offset[k]
        put(yk, lay.x_offset[t], sys.E_out[k], mirror=True)
        put(yk, lay.x_offset[hd], -sys.E_in[k], mirror=True)
        put(yk, yk, -sys.D[k])
    N = sys.order
    if not rows:
        return sp.csr_matrix((N, N))
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
    )
    return A.tocsr()


def _block_product(sys, xs, ys, vertices, arcs, skip_in_arc=None):
    """Apply the saddle-point matrix restricted to ``vertices``/``arcs``."""
    tree = sys.tree
    ox, oy = {}, {}
    for v in vertices:
        acc = sys.B[v] @ xs[v]
        for k in tree.out_arcs[v]:
            acc += sys.E_out[k].T @ ys[k]
        k = tree.in_arc.get(v)
        if k is not None and k != skip_in_arc:
            acc -= sys.E_in[k].T @ ys[k]
        ox[v] = acc
    for k in arcs:
        t, hd = tree.arcs[k - 1]
        oy[k] = sys.E_out[k] @ xs[t] - sys.E_in[k] @ xs[hd] - sys.D[k] @ ys[k]
    return ox, oy


def matvec(sys: TreeCoupledSystem, v) -> np.ndarray:
    """Global matrix times ``v`` evaluated block by block."""
    xs, ys = split(sys, v)
    ox, oy = _block_product(
        sys, xs, ys, sys.tree.vertices, range(1, sys.tree.n_arcs + 1)
    )
    return join(sys, ox, oy)


def subtree_arcs(sys: TreeCoupledSystem, i: int) -> list[int]:
    tree = sys.tree
    return [k for v in subtree_vertices(tree, i) for k in tree.out_arcs[v]]


def subtree_matvec(sys: TreeCoupledSystem, i: int, xs: dict, ys: dict) -> tuple[dict, dict]:
    """Product with the subtree matrix rooted at ``i`` on per-block dicts."""
    verts = subtree_vertices(sys.tree, i)
    arcs = [k for v in verts for k in sys.tree.out_arcs[v]]
    return _block_product(sys, xs, ys, verts, arcs, skip_in_arc=sys.tree.in_arc.get(i))


def nested_permutation(sys: TreeCoupledSystem) -> np.ndarray:
    """Index array ``p`` with ``A[p][:, p]`` in nested arrowhead order.

    The nested order of the subtree at ``i`` is the child subtrees in arc
    order, then ``x_i``, then the coupling blocks of the outgoing arcs.
    """
    lay = sys.layout
    tree = sys.tree
    out: list[np.ndarray] = []

    def rng(o, n):
        return np.arange(o, o + n)

    def visit(i):
        for k in tree.out_arcs[i]:
            visit(tree.head(k))
        out.append(rng(lay.x_offset[i], sys.n(i)))
        for k in tree.out_arcs[i]:
            out.append(rng(lay.y_offset[k], sys.l(k)))

    visit(tree.root)
    return np.concatenate(out) if out else np.zeros(0, dtype=int)


def residual(sys: TreeCoupledSystem, x, rhs) -> tuple[np.ndarray, float]:
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (sys.order,):
        raise DimensionError(f"rhs of shape {rhs.shape}, expected ({sys.order},)")
    r = rhs - matvec(sys, x)
    return r, float(np.linalg.norm(r))


class BlockFactors:
    """Lazily computed LU factorizations of the vertex blocks ``B_i``.

    All solves are charged to ``counter`` under the vertex id.
    """

    def __init__(self, sys: TreeCoupledSystem, counter: SolveCounter | None = None):
        self.sys = sys
        self.counter = counter if counter is not None else SolveCounter()
        self._f: dict[int, Factorization] = {}

    def __getitem__(self, i: int) -> Factorization:
        f = self._f.get(i)
        if f is None:
            f = factorize(self.sys.B[i], "lu", tag=i, counter=self.counter)
            self._f[i] = f
        return f

    def factor_all(self) -> "BlockFactors":
        for i in self.sys.tree.vertices:
            self[i]
        return self

    def solve(self, i: int, rhs) -> np.ndarray:
        return self[i].solve(rhs)

    def solve_transpose(self, i: int, rhs) -> np.ndarray:
        return self[i].solve_transpose(rhs)


def dense_schur(sys: TreeCoupledSystem) -> np.ndarray:
    """``C B^{-1} C^T + D`` in arc-id order, via dense block solves (uncounted)."""
    A = assemble_global(sys).toarray()
    n = sys.layout.n
    Bm, Ct, Dm = A[:n, :n], A[:n, n:], -A[n:, n:]
    return Ct.T @ np.linalg.solve(Bm, Ct) + Dm


def check_assumptions(sys: TreeCoupledSystem, strict: bool = False) -> dict:
    """Check invertibility of every ``B_i`` and positive definiteness of ``S``.

    A singular block always raises.  An indefinite Schur complement warns, or
    raises :class:`NotPositiveDefiniteError` when ``strict``.
    """
    for i in sys.tree.vertices:
        factorize(sys.B[i], "lu", tag=i)
    report = {"B_invertible": True, "S_positive_definite": True}
    if sys.layout.m:
        S = dense_schur(sys)
        try:
            factorize(0.5 * (S + S.T), "cholesky", tag="S")
        except NotPositiveDefiniteError:
            report["S_positive_definite"] = False
            if strict:
                raise
            warnings.warn("Schur complement S is not positive definite", RuntimeWarning)
    return report
