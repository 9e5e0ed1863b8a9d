"""Recursive Schur-complement direct solver over the nested arrowhead layout.

Setup walks the tree leaves-to-root and forms, for each inner vertex ``i``,
the Schur complement ``S_{<=i}`` of its subtree matrix with respect to the
coupling blocks of its outgoing arcs.  The solve recurses twice into each
child subtree, once to build the Schur right-hand side and once to recover
the child solution, so vertex ``i`` is visited ``2**depth(i)`` times.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import BlockFactors, TreeCoupledSystem, join, split
from .errors import NotPositiveDefiniteError
from .factor import Factorization, factorize

__all__ = ["NestedSchurSet", "compute_arrowhead_schur", "solve_direct", "solve_subtree"]


@dataclass
class NestedSchurSet:
    """Subtree Schur complements and the incoming Schur blocks.

    ``S[i]`` is ``S_{<=i}`` (order ``m_out(i)``, blocks ordered like the
    outgoing arcs of ``i``); ``incoming[j]`` is ``C_j^- B_{<=j}^{-1} (C_j^-)^T``
    for every non-root vertex ``j``.
    """

    system: TreeCoupledSystem
    factors: BlockFactors
    S: dict[int, np.ndarray]
    S_fact: dict[int, Factorization]
    incoming: dict[int, np.ndarray]
    offsets: dict[int, list[int]]

    def block(self, i: int, l: int, lp: int) -> np.ndarray:
        o = self.offsets[i]
        return self.S[i][o[l]:o[l + 1], o[lp]:o[lp + 1]]


def _offsets(sys, i):
    o = [0]
    for k in sys.tree.out_arcs[i]:
        o.append(o[-1] + sys.l(k))
    return o


def compute_arrowhead_schur(sys: TreeCoupledSystem, factors: BlockFactors | None = None) -> NestedSchurSet:
    """Form every ``S_{<=i}`` bottom-up without recursing past the children.

    Raises :class:`NotPositiveDefiniteError` tagged with the vertex id if a
    subtree Schur complement fails Cholesky.
    """
    if factors is None:
        factors = BlockFactors(sys)
    tree = sys.tree
    S, S_fact, incoming, offsets = {}, {}, {}, {}
    for i in reversed(tree.preorder):
        outs = tree.out_arcs[i]
        if outs:
            off = _offsets(sys, i)
            offsets[i] = off
            Eo = np.vstack([sys.E_out[k] for k in outs])
            Z = factors.solve(i, Eo.T)
            Si = Eo @ Z
            for l, k in enumerate(outs):
                j = tree.head(k)
                sl = slice(off[l], off[l + 1])
                Si[sl, sl] += incoming[j] + sys.D[k]
            Si = 0.5 * (Si + Si.T)
            try:
                S_fact[i] = factorize(Si, "cholesky", tag=("S<=", i))
            except NotPositiveDefiniteError as exc:
                raise NotPositiveDefiniteError(
                    f"subtree Schur complement at vertex {i} is not positive definite", i
                ) from exc
            S[i] = Si
        k_in = tree.in_arc.get(i)
        if k_in is not None:
            incoming[i] = _outgoing_schur_block(sys, factors, i, k_in, S_fact.get(i))
    return NestedSchurSet(sys, factors, S, S_fact, incoming, offsets)


def _outgoing_schur_block(sys, factors, i, k_in, S_fact):
    """``E_in B_{<=i}^{-1} E_in^T`` restricted to the ``x_i`` block."""
    Ein = sys.E_in[k_in]
    H = Ein.T
    outs = sys.tree.out_arcs[i]
    if not outs:
        return Ein @ factors.solve(i, H)
    Eo = np.vstack([sys.E_out[k] for k in outs])
    Zl = factors.solve(i, H)
    Y = S_fact.solve(Eo @ Zl)
    Xi = factors.solve(i, H - Eo.T @ Y)
    W = Ein @ Xi
    return 0.5 * (W + W.T)


def solve_subtree(schur: NestedSchurSet, i: int, hx: dict, hy: dict, out_x: dict, out_y: dict) -> None:
    """Solve the subtree system at ``i``; results are written into ``out_x``/``out_y``.

    ``hx``/``hy`` hold the right-hand side pieces of the subtree's vertices and
    arcs; entries outside the subtree are ignored.
    """
    sys = schur.system
    tree = sys.tree
    fac = schur.factors
    outs = tree.out_arcs[i]
    if not outs:
        out_x[i] = fac.solve(i, hx[i])
        return
    off = schur.offsets[i]
    Bh = fac.solve(i, hx[i])
    xhat = np.empty(off[-1])
    for l, k in enumerate(outs):
        j = tree.head(k)
        solve_subtree(schur, j, hx, hy, out_x, out_y)
        xhat[off[l]:off[l + 1]] = -sys.E_in[k] @ out_x[j] + sys.E_out[k] @ Bh - hy[k]
    y = schur.S_fact[i].solve(xhat)
    acc = hx[i].copy()
    for l, k in enumerate(outs):
        yk = y[off[l]:off[l + 1]]
        out_y[k] = yk
        acc -= sys.E_out[k].T @ yk
    out_x[i] = fac.solve(i, acc)
    for l, k in enumerate(outs):
        j = tree.head(k)
        saved = hx[j]
        hx[j] = saved + sys.E_in[k].T @ out_y[k]
        try:
            solve_subtree(schur, j, hx, hy, out_x, out_y)
        finally:
            hx[j] = saved


def solve_direct(sys: TreeCoupledSystem, schur: NestedSchurSet, rhs) -> np.ndarray:
    """Solve the full system with the nested Schur recursion started at the root."""
    hx, hy = split(sys, rhs)
    out_x, out_y = {}, {}
    solve_subtree(schur, sys.tree.root, hx, hy, out_x, out_y)
    return join(sys, out_x, out_y)
