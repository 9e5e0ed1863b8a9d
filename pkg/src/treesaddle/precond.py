"""Preconditioners for tree-coupled systems, applied in the global layout.

Nested preconditioners are defined on the subtree matrices and recurse over
the tree; they act on per-block dictionaries internally, which is the same
as conjugating by the nested permutation.  The non-nested preconditioner is
the block lower-triangular matrix ``[[B, 0], [C, S]]`` with the ``S`` solve
replaced by an inner policy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .blocks import BlockFactors, TreeCoupledSystem, join, split, subtree_matvec
from .direct import NestedSchurSet, compute_arrowhead_schur
from .errors import PreconditionerNotApplicable, SingularBlockError
from .factor import SolveCounter, factorize
from .multilevel import Hierarchy, build_hierarchy, cycle_apply
from .schur import (
    VertexBlockSchur,
    assemble_vertex_schur,
    block_diagonal_smoother,
    build_supernode_smoother,
)
from .tree import level_family

__all__ = [
    "Preconditioner",
    "make_preconditioner",
    "KINDS",
    "hook_apply",
    "rec_apply",
    "exact_apply",
    "recursive_fixed_point",
    "ExactSchurSolve",
    "JacobiSweeps",
    "MLCycles",
]

KINDS = ("identity", "nested_block_diag", "hook", "recursive", "exact", "nonnested_triangular")


# -- nested recursions on block dictionaries ---------------------------------

def rec_apply(schur: NestedSchurSet, i: int, hx: dict, hy: dict, child: Callable) -> tuple[dict, dict]:
    """Apply the inverse of the recursive preconditioner at ``i``.

    ``child(j, hx, hy)`` applies the chosen child-level inverse on subtree ``j``.
    """
    sys = schur.system
    tree = sys.tree
    fac = schur.factors
    outs = tree.out_arcs[i]
    if not outs:
        return {i: fac.solve(i, hx[i])}, {}
    ox, oy = {}, {}
    xi = fac.solve(i, hx[i])
    off = schur.offsets[i]
    zhat = np.empty(off[-1])
    for l, k in enumerate(outs):
        j = tree.head(k)
        cx, cy = child(j, hx, hy)
        ox.update(cx)
        oy.update(cy)
        zhat[off[l]:off[l + 1]] = -sys.E_in[k] @ cx[j] + sys.E_out[k] @ xi - hy[k]
    y = schur.S_fact[i].solve(zhat)
    for l, k in enumerate(outs):
        oy[k] = y[off[l]:off[l + 1]]
    ox[i] = xi
    return ox, oy


def rec_apply_transpose(schur: NestedSchurSet, i: int, hx: dict, hy: dict, child: Callable) -> tuple[dict, dict]:
    """Transpose of :func:`rec_apply`; ``child`` must apply the child transpose."""
    sys = schur.system
    tree = sys.tree
    fac = schur.factors
    outs = tree.out_arcs[i]
    if not outs:
        return {i: fac.solve_transpose(i, hx[i])}, {}
    off = schur.offsets[i]
    f = np.concatenate([hy[k] for k in outs])
    y = -schur.S_fact[i].solve(f)
    ox, oy = {}, {}
    acc = hx[i].copy()
    for l, k in enumerate(outs):
        yk = y[off[l]:off[l + 1]]
        oy[k] = yk
        acc -= sys.E_out[k].T @ yk
    ox[i] = fac.solve_transpose(i, acc)
    for l, k in enumerate(outs):
        j = tree.head(k)
        saved = hx[j]
        hx[j] = saved + sys.E_in[k].T @ oy[k]
        try:
            cx, cy = child(j, hx, hy)
        finally:
            hx[j] = saved
        ox.update(cx)
        oy.update(cy)
    return ox, oy


def hook_apply(schur, i, hx, hy, transpose=False):
    if transpose:
        return rec_apply_transpose(schur, i, hx, hy, lambda j, a, b: hook_apply(schur, j, a, b, True))
    return rec_apply(schur, i, hx, hy, lambda j, a, b: hook_apply(schur, j, a, b, False))


def _sub_residual(schur, i, hx, hy, ux, uy, factor=1.0):
    bx, by = subtree_matvec(schur.system, i, ux, uy)
    rx = {v: factor * hx[v] - bx[v] for v in bx}
    ry = {k: factor * hy[k] - by[k] for k in by}
    return rx, ry


def exact_apply(schur, i, hx, hy, transpose=False):
    """Exact inverse of the subtree matrix as two recursive fixed-point steps.

    Forward: ``u = P^{-1} h``, result ``u + P^{-1}(h - B u)``.
    Transpose: ``v = P^{-T} h``, result ``P^{-T}(2 h - B v)``.
    """
    tree = schur.system.tree
    if not tree.out_arcs[i]:
        fac = schur.factors
        return {i: fac.solve_transpose(i, hx[i]) if transpose else fac.solve(i, hx[i])}, {}
    if transpose:
        child = lambda j, a, b: exact_apply(schur, j, a, b, True)  # noqa: E731
        vx, vy = rec_apply_transpose(schur, i, hx, hy, child)
        rx, ry = _sub_residual(schur, i, hx, hy, vx, vy, factor=2.0)
        return rec_apply_transpose(schur, i, rx, ry, child)
    child = lambda j, a, b: exact_apply(schur, j, a, b, False)  # noqa: E731
    ux, uy = rec_apply(schur, i, hx, hy, child)
    rx, ry = _sub_residual(schur, i, hx, hy, ux, uy)
    dx, dy = rec_apply(schur, i, rx, ry, child)
    return {v: ux[v] + dx[v] for v in ux}, {k: uy[k] + dy[k] for k in uy}


def recursive_fixed_point(schur: NestedSchurSet, i, h, x0=None, iters: int = 2, child: str = "exact"):
    """Fixed-point iteration ``x <- x + P_rec^{-1}(h - B x)`` on the subtree at ``i``.

    ``h`` and ``x0`` are global vectors (for the root) or ``(xs, ys)`` block
    dictionaries.  ``child`` picks the child-level inverse: ``"exact"`` or
    ``"hook"``.  Returns the iterate in the same form as ``h``.
    """
    sys = schur.system
    as_vector = isinstance(h, np.ndarray)
    if as_vector:
        hx, hy = split(sys, h)
    else:
        hx, hy = h
    from .blocks import subtree_arcs
    from .tree import subtree_vertices

    verts = subtree_vertices(sys.tree, i)
    arcs = subtree_arcs(sys, i)
    if x0 is None:
        xx = {v: np.zeros(sys.n(v)) for v in verts}
        xy = {k: np.zeros(sys.l(k)) for k in arcs}
    elif isinstance(x0, np.ndarray):
        a, b = split(sys, x0)
        xx, xy = {v: a[v].copy() for v in verts}, {k: b[k].copy() for k in arcs}
    else:
        xx, xy = {v: x0[0][v].copy() for v in verts}, {k: x0[1][k].copy() for k in arcs}
    if child == "exact":
        cfun = lambda j, a, b: exact_apply(schur, j, a, b)  # noqa: E731
    elif child == "hook":
        cfun = lambda j, a, b: hook_apply(schur, j, a, b)  # noqa: E731
    else:
        raise ValueError(f"unknown child preconditioner {child!r}")
    for _ in range(iters):
        rx, ry = _sub_residual(schur, i, hx, hy, xx, xy)
        dx, dy = rec_apply(schur, i, rx, ry, cfun)
        xx = {v: xx[v] + dx[v] for v in xx}
        xy = {k: xy[k] + dy[k] for k in xy}
    if as_vector:
        return join(sys, xx, xy)
    return xx, xy


# -- inner solvers for the non-nested Schur block ----------------------------

class ExactSchurSolve:
    def __init__(self, S: VertexBlockSchur):
        self.fact = factorize(S.dense(), "cholesky", tag="S")

    def apply(self, g):
        return self.fact.solve(g)

    apply_transpose = apply


@dataclass
class JacobiSweeps:
    S: VertexBlockSchur
    smoother: object
    sweeps: int = 1

    def _run(self, g, transpose):
        y = None
        for _ in range(self.sweeps):
            r = g if y is None else g - self.S.matrix @ y
            d = self.smoother.apply_transpose(r) if transpose else self.smoother.apply(r)
            y = d if y is None else y + d
        return np.zeros_like(g) if y is None else y

    def apply(self, g):
        return self._run(g, False)

    def apply_transpose(self, g):
        return self._run(g, True)


@dataclass
class MLCycles:
    H: Hierarchy
    cycle: str = "v"
    cycles: int = 1

    def _run(self, g, transpose):
        y = None
        A = self.H.matrices[-1]
        for _ in range(self.cycles):
            r = g if y is None else g - A @ y
            d = cycle_apply(self.H, self.cycle, r, transpose=transpose)
            y = d if y is None else y + d
        return np.zeros_like(g) if y is None else y

    def apply(self, g):
        return self._run(g, False)

    def apply_transpose(self, g):
        return self._run(g, True)


# -- preconditioner objects ---------------------------------------------------

class Preconditioner:
    """Linear operator ``P^{-1}`` with its transpose, both in the global layout."""

    def __init__(self, kind, system, factors, apply, apply_transpose, info=None):
        self.kind = kind
        self.system = system
        self.factors = factors
        self._apply = apply
        self._apply_t = apply_transpose
        self.info = info or {}

    @property
    def counter(self) -> SolveCounter:
        return self.factors.counter

    def apply(self, v) -> np.ndarray:
        return self._apply(np.asarray(v, dtype=float))

    def apply_transpose(self, v) -> np.ndarray:
        return self._apply_t(np.asarray(v, dtype=float))

    def dense(self, transpose=False) -> np.ndarray:
        n = self.system.order
        f = self.apply_transpose if transpose else self.apply
        return np.column_stack([f(e) for e in np.eye(n)])


def _nested_op(sys, schur, fun, transpose):
    def op(v):
        hx, hy = split(sys, v)
        hx = dict(hx)
        ox, oy = fun(schur, sys.tree.root, hx, hy, transpose)
        return join(sys, ox, oy)
    return op


def _identity(v):
    return v.copy()


def make_preconditioner(
    system: TreeCoupledSystem,
    kind: str,
    factors: BlockFactors | None = None,
    policy: str = "jacobi",
    sweeps: int = 1,
    smoother: str = "bdiag",
    cycle: str = "v",
    hierarchy: str = "top_down",
    cycles: int = 1,
    pre_smooth: int = 0,
    post_smooth: int = 1,
    even_odd_coarse: str = "even",
) -> Preconditioner:
    """Set up a preconditioner of the given ``kind``.

    Setup solves are charged to the ``"setup"`` phase of the factors' counter.
    ``policy`` selects the inner ``S`` solver of ``nonnested_triangular``:
    ``"exact"`` (Cholesky of ``S``), ``"jacobi"`` (``sweeps`` block-Jacobi
    sweeps with ``smoother``) or ``"ml"`` (``cycles`` multi-level cycles).
    """
    sys = system
    if factors is None:
        factors = BlockFactors(sys)
    counter = factors.counter
    if kind not in KINDS:
        raise ValueError(f"unknown preconditioner kind {kind!r}")
    with counter.scope("setup"):
        if kind == "identity":
            return Preconditioner(kind, sys, factors, _identity, _identity)

        if kind == "nested_block_diag":
            try:
                Dfact = {k: factorize(sys.D[k], "lu", tag=("D", k)) for k in range(1, sys.tree.n_arcs + 1)}
            except SingularBlockError as exc:
                raise PreconditionerNotApplicable(
                    f"nested block-diagonal preconditioner needs invertible D_k: {exc}"
                ) from exc
            factors.factor_all()

            def bd(v, transpose=False):
                hx, hy = split(sys, v)
                ox = {i: (factors.solve_transpose(i, hx[i]) if transpose else factors.solve(i, hx[i])) for i in hx}
                oy = {k: -(Dfact[k].solve_transpose(hy[k]) if transpose else Dfact[k].solve(hy[k])) for k in hy}
                return join(sys, ox, oy)

            return Preconditioner(kind, sys, factors, bd, lambda v: bd(v, True))

        if kind in ("hook", "exact", "recursive"):
            schur = compute_arrowhead_schur(sys, factors)
            if kind == "hook":
                fwd = _nested_op(sys, schur, hook_apply, False)
                bwd = _nested_op(sys, schur, hook_apply, True)
            elif kind == "exact":
                fwd = _nested_op(sys, schur, exact_apply, False)
                bwd = _nested_op(sys, schur, exact_apply, True)
            else:
                def fwd(v):
                    return recursive_fixed_point(schur, sys.tree.root, v, None, iters=2, child="exact")
                bwd = _nested_op(sys, schur, exact_apply, True)
            return Preconditioner(kind, sys, factors, fwd, bwd, {"schur": schur})

        # non-nested block-triangular
        factors.factor_all()
        if sys.tree.n_arcs == 0:
            inner = None
            S = None
        else:
            S = assemble_vertex_schur(sys, factors)
            if policy == "exact":
                inner = ExactSchurSolve(S)
            elif policy == "jacobi":
                sm = block_diagonal_smoother(S) if smoother == "bdiag" else build_supernode_smoother(S)
                inner = JacobiSweeps(S, sm, sweeps)
            elif policy == "ml":
                fam = level_family(sys.tree, "even_odd" if hierarchy == "even_odd" else hierarchy, coarse=even_odd_coarse)
                H = build_hierarchy(
                    S, fam, smoother, pre_smooth=pre_smooth, post_smooth=post_smooth,
                    two_level=(cycle == "two_level"),
                )
                inner = MLCycles(H, cycle, cycles)
            else:
                raise ValueError(f"unknown inner policy {policy!r}")

    tree = sys.tree
    m0 = sys.layout.n

    def fwd(v):
        hx, hy = split(sys, v)
        ox = {i: factors.solve(i, hx[i]) for i in tree.vertices}
        if inner is None:
            return join(sys, ox, {})
        fx = np.empty(sys.layout.m)
        for k, (t, hd) in enumerate(tree.arcs, start=1):
            sl = sys.layout.y_slice(k, sys)
            fx[sl.start - m0:sl.stop - m0] = hy[k] - (sys.E_out[k] @ ox[t] - sys.E_in[k] @ ox[hd])
        y = S.to_arc_order(inner.apply(S.to_vertex_order(fx)))
        out = join(sys, ox, {k: np.zeros(sys.l(k)) for k in hy})
        out[m0:] = y
        return out

    def bwd(v):
        hx, hy = split(sys, v)
        if inner is None:
            return join(sys, {i: factors.solve_transpose(i, hx[i]) for i in tree.vertices}, {})
        f = np.asarray(v[m0:])
        y = S.to_arc_order(inner.apply_transpose(S.to_vertex_order(f)))
        _, ys = split(sys, np.concatenate([np.zeros(m0), y]))
        ox = {}
        for i in tree.vertices:
            acc = hx[i].copy()
            for k in tree.out_arcs[i]:
                acc -= sys.E_out[k].T @ ys[k]
            k = tree.in_arc.get(i)
            if k is not None:
                acc += sys.E_in[k].T @ ys[k]
            ox[i] = factors.solve_transpose(i, acc)
        out = join(sys, ox, {k: np.zeros(sys.l(k)) for k in range(1, tree.n_arcs + 1)})
        out[m0:] = y
        return out

    return Preconditioner(kind, sys, factors, fwd, bwd, {"S": S, "inner": inner, "policy": policy})
