"""Non-nested Schur complement in vertex-based blocks and its block smoothers.

Block ``i`` of ``S = C B^{-1} C^T + D`` collects the coupling variables of
the outgoing arcs of inner vertex ``i``.  Blocks are nonzero only on the
diagonal and for inner arcs, so ``S`` is stored sparse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .blocks import BlockFactors, TreeCoupledSystem
from .errors import DimensionError, NotPositiveDefiniteError, ValidationError
from .factor import Factorization, factorize

__all__ = [
    "VertexBlockSchur",
    "BlockSmoother",
    "assemble_vertex_schur",
    "block_diagonal_smoother",
    "build_supernode_smoother",
    "supernode_groups",
    "block_jacobi",
]


@dataclass
class VertexBlockSchur:
    system: TreeCoupledSystem
    vertices: tuple[int, ...]          # inner vertices, pre-order
    offset: dict[int, int]             # start of block i in the vertex-block order
    size: dict[int, int]               # m_out(i)
    blocks: dict[tuple[int, int], np.ndarray]
    matrix: sp.csr_matrix
    arc_index: np.ndarray              # vertex-block position -> global y position

    @property
    def n_f(self) -> int:
        return self.matrix.shape[0]

    def indices(self, vertices) -> np.ndarray:
        idx = [np.arange(self.offset[v], self.offset[v] + self.size[v]) for v in vertices]
        return np.concatenate(idx) if idx else np.zeros(0, dtype=int)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def to_vertex_order(self, y_global_part: np.ndarray) -> np.ndarray:
        """Reorder a coupling vector from arc-id order to vertex-block order."""
        return np.asarray(y_global_part)[self.arc_index]

    def to_arc_order(self, y_vertex: np.ndarray) -> np.ndarray:
        out = np.empty_like(y_vertex)
        out[self.arc_index] = y_vertex
        return out

    def matvec(self, y: np.ndarray) -> np.ndarray:
        return self.matrix @ y


def assemble_vertex_schur(sys: TreeCoupledSystem, factors: BlockFactors | None = None) -> VertexBlockSchur:
    """Assemble ``S`` block by block.

    Each vertex ``j`` costs ``m_out(j)`` solves for its outgoing columns plus
    ``m_in(j)`` for its incoming column, ``l_j`` solves in total.
    """
    if factors is None:
        factors = BlockFactors(sys)
    tree = sys.tree
    inner = tree.inner_vertices
    offset, size = {}, {}
    arc_pos = {}
    pos = 0
    for i in inner:
        offset[i] = pos
        for k in tree.out_arcs[i]:
            arc_pos[k] = pos
            pos += sys.l(k)
        size[i] = pos - offset[i]
    n_f = pos
    arc_index = np.empty(n_f, dtype=int)
    m0 = sys.layout.n
    for k, p in arc_pos.items():
        g = sys.layout.y_offset[k] - m0
        arc_index[p:p + sys.l(k)] = np.arange(g, g + sys.l(k))

    blocks: dict[tuple[int, int], np.ndarray] = {}
    # per-vertex solves: Zo = B_j^{-1} E_out^T (all outgoing), Zi = B_j^{-1} E_in^T
    Zo, Zi = {}, {}
    for j in tree.preorder:
        outs = tree.out_arcs[j]
        if outs:
            Eo = np.vstack([sys.E_out[k] for k in outs])
            Zo[j] = (Eo, factors.solve(j, Eo.T))
        k_in = tree.in_arc.get(j)
        if k_in is not None:
            Zi[j] = factors.solve(j, sys.E_in[k_in].T)

    for i in inner:
        Eo, Z = Zo[i]
        Sii = Eo @ Z
        p = 0
        for k in tree.out_arcs[i]:
            j = tree.head(k)
            lk = sys.l(k)
            Sii[p:p + lk, p:p + lk] += sys.E_in[k] @ Zi[j] + sys.D[k]
            p += lk
        blocks[(i, i)] = 0.5 * (Sii + Sii.T)
        p = 0
        for k in tree.out_arcs[i]:
            j = tree.head(k)
            lk = sys.l(k)
            if j in Zo:
                Eo_j, Z_j = Zo[j]
                # row block: arc k of i; column block: outgoing arcs of j.
                Sij = np.zeros((size[i], size[j]))
                Sij[p:p + lk, :] = -sys.E_in[k] @ Z_j
                if (i, j) in blocks:
                    blocks[(i, j)] += Sij
                else:
                    blocks[(i, j)] = Sij
                blocks[(j, i)] = blocks[(i, j)].T
            p += lk

    rows, cols, vals = [], [], []
    for (a, b), M in blocks.items():
        r, c = np.indices(M.shape)
        rows.append((r + offset[a]).ravel())
        cols.append((c + offset[b]).ravel())
        vals.append(M.ravel())
    if rows:
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n_f, n_f)
        ).tocsr()
    else:
        mat = sp.csr_matrix((n_f, n_f))
    return VertexBlockSchur(sys, inner, offset, size, blocks, mat, arc_index)


@dataclass
class BlockSmoother:
    """Block inverse of ``S`` restricted to disjoint vertex groups.

    Applies ``G = blkdiag(S[g, g])^{-1}`` over ``groups`` on the vector space of
    ``level`` (the vertex set the smoother acts on, in block order).
    """

    kind: str
    level: tuple[int, ...]
    groups: tuple[tuple[int, ...], ...]
    local_index: tuple[np.ndarray, ...]
    facts: tuple[Factorization, ...]

    def apply(self, r: np.ndarray) -> np.ndarray:
        out = np.empty_like(r)
        for idx, f in zip(self.local_index, self.facts):
            out[idx] = f.solve(r[idx])
        return out

    # G is symmetric; transpose application is identical.
    apply_transpose = apply

    def dense(self, n: int) -> np.ndarray:
        return np.column_stack([self.apply(e) for e in np.eye(n)]) if n else np.zeros((0, 0))


def _level_local_index(S: VertexBlockSchur, level, group):
    pos, p = {}, 0
    for v in level:
        pos[v] = p
        p += S.size[v]
    return np.concatenate([np.arange(pos[v], pos[v] + S.size[v]) for v in group])


def _make_smoother(S: VertexBlockSchur, kind, level, groups) -> BlockSmoother:
    A = S.matrix
    locs, facts = [], []
    for g in groups:
        gi = S.indices(g)
        sub = A[gi][:, gi].toarray()
        try:
            facts.append(factorize(0.5 * (sub + sub.T), "cholesky", tag=("smoother", g)))
        except NotPositiveDefiniteError as exc:
            raise NotPositiveDefiniteError(f"smoother group {g} is not positive definite", g) from exc
        locs.append(_level_local_index(S, level, g))
    return BlockSmoother(kind, tuple(level), tuple(tuple(g) for g in groups), tuple(locs), tuple(facts))


def block_diagonal_smoother(S: VertexBlockSchur, level=None) -> BlockSmoother:
    """``S_diag^{-1}`` restricted to ``level`` (default: all inner vertices)."""
    level = tuple(S.vertices if level is None else level)
    return _make_smoother(S, "block_diagonal", level, [(v,) for v in level])


def supernode_groups(S: VertexBlockSchur, level_set, centers=None) -> list[tuple[int, ...]]:
    """Vertex groups of the super-node smoother on ``level_set``.

    By default every vertex of maximum height in ``level_set`` becomes a
    center, merged with its inner children; overlaps go to the center that
    comes first in pre-order.  Vertices not absorbed stay singletons.
    """
    tree = S.system.tree
    inner = set(S.vertices)
    order = {v: n for n, v in enumerate(tree.preorder)}
    level = sorted(set(level_set), key=order.__getitem__)
    if not set(level) <= inner:
        raise ValidationError("level set must consist of inner vertices")
    lset = set(level)
    if centers is None:
        hmax = max(tree.height[v] for v in level)
        cands = [v for v in level if tree.height[v] == hmax]
        strict = False
    else:
        cands = sorted(centers, key=order.__getitem__)
        strict = True
    used: set[int] = set()
    merged = []
    for c in cands:
        kids = [v for v in tree.children(c) if v in inner]
        group = [c] + kids
        ok = all(v in lset for v in group) and not (used & set(group))
        if not ok:
            if strict:
                raise ValidationError(f"super-node group at {c} is not eligible on this level")
            continue
        used.update(group)
        merged.append(tuple(group))
    groups = []
    for v in level:
        for g in merged:
            if g[0] == v:
                groups.append(g)
        if v not in used:
            groups.append((v,))
    return groups


def build_supernode_smoother(S: VertexBlockSchur, level_set=None, centers=None) -> BlockSmoother:
    level = [v for v in S.vertices if level_set is None or v in set(level_set)]
    groups = supernode_groups(S, level, centers)
    return _make_smoother(S, "super_node", tuple(level), groups)


def block_jacobi(S: VertexBlockSchur, smoother: BlockSmoother, rhs, y0=None, sweeps: int = 1, matrix=None) -> np.ndarray:
    """``sweeps`` steps of ``y <- y + G (rhs - S y)``.

    ``matrix`` overrides ``S.matrix`` when the smoother acts on a restricted
    level.
    """
    A = S.matrix if matrix is None else matrix
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (A.shape[0],):
        raise DimensionError(f"rhs of shape {rhs.shape}, expected ({A.shape[0]},)")
    y = np.zeros_like(rhs) if y0 is None else np.array(y0, dtype=float)
    for _ in range(sweeps):
        y = y + smoother.apply(rhs - A @ y)
    return y
