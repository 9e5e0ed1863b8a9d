"""Multi-level approximate inverses of the vertex-block Schur complement.

Levels are nested inner-vertex sets, coarsest first.  Transfers are subset
operators, so every restricted matrix is a principal block submatrix of
``S`` and prolongation is zero-padding.

A cycle at level ``j`` is a sequence of correction steps
``x <- x + M (g - S_j x)`` started from ``x = 0``, where ``M`` is either the
smoother ``G_j`` or the coarse correction ``P Psi_{j-1} P^T``.  Its transpose
runs the steps in reverse order with each ``M`` transposed.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, ValidationError
from .factor import factorize
from .schur import BlockSmoother, VertexBlockSchur, block_diagonal_smoother, build_supernode_smoother
from .tree import LevelFamily, is_conflict_free

__all__ = [
    "SubsetOperator",
    "Hierarchy",
    "build_hierarchy",
    "cycle_apply",
    "cycle_matrix",
    "iteration_matrix_norms",
    "CYCLES",
]

CYCLES = ("two_level", "v", "w", "f")
MAX_DENSE = 150


@dataclass(frozen=True)
class SubsetOperator:
    """Restriction keeping the blocks of ``coarse`` out of a vector over ``fine``."""

    fine: tuple[int, ...]
    coarse: tuple[int, ...]
    index: np.ndarray
    n_fine: int

    @classmethod
    def build(cls, S: VertexBlockSchur, coarse, fine) -> "SubsetOperator":
        pos, p = {}, 0
        for v in fine:
            pos[v] = p
            p += S.size[v]
        missing = [v for v in coarse if v not in pos]
        if missing:
            raise ValidationError(f"coarse vertices {missing} not in the fine set")
        idx = [np.arange(pos[v], pos[v] + S.size[v]) for v in coarse]
        index = np.concatenate(idx) if idx else np.zeros(0, dtype=int)
        return cls(tuple(fine), tuple(coarse), index, p)

    def restrict(self, v: np.ndarray) -> np.ndarray:
        return v[self.index]

    def prolong(self, w: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n_fine)
        out[self.index] = w
        return out

    def matrix(self) -> sp.csr_matrix:
        nc = len(self.index)
        return sp.csr_matrix((np.ones(nc), (np.arange(nc), self.index)), shape=(nc, self.n_fine))


@dataclass
class Hierarchy:
    S: VertexBlockSchur
    sets: tuple[tuple[int, ...], ...]
    matrices: list[sp.csr_matrix]
    transfers: list[SubsetOperator]       # transfers[j] maps level j+1 -> level j
    smoothers: list[BlockSmoother | None]
    coarse: BlockSmoother | object
    smoother_kind: str
    pre_smooth: int = 0
    post_smooth: int = 1
    calls: Counter = field(default_factory=Counter)

    @property
    def n_levels(self) -> int:
        return len(self.sets)

    def size(self, j: int) -> int:
        return self.matrices[j].shape[0]


class _DenseCoarse:
    def __init__(self, M):
        self.fact = factorize(0.5 * (M + M.T), "cholesky", tag="S_c")

    def apply(self, r):
        return self.fact.solve(r)

    apply_transpose = apply


def build_hierarchy(
    S: VertexBlockSchur,
    family: LevelFamily | list,
    smoother: str = "bdiag",
    pre_smooth: int = 0,
    post_smooth: int = 1,
    two_level: bool = False,
    allow_dense_coarse: bool = False,
) -> Hierarchy:
    """Build level matrices, transfers and smoothers for a nested family.

    ``smoother`` is ``"bdiag"`` (blocks of ``S_diag^{-1}`` on each level) or
    ``"super"`` (per-level super-node smoother).  ``two_level`` keeps only the
    coarsest and the finest set.  The coarsest set must be conflict-free
    unless ``allow_dense_coarse``, in which case its matrix is factored densely.
    """
    sets = family.sets if isinstance(family, LevelFamily) else tuple(tuple(s) for s in family)
    order = {v: n for n, v in enumerate(S.vertices)}
    sets = [tuple(sorted(s, key=order.__getitem__)) for s in sets]
    if two_level and len(sets) > 2:
        sets = [sets[0], sets[-1]]
    for a, b in zip(sets, sets[1:]):
        if not set(a) < set(b):
            raise ValidationError("level sets must be strictly nested")
    if set(sets[-1]) != set(S.vertices):
        raise ValidationError("finest level must be the full inner vertex set")
    tree = S.system.tree

    mats = []
    for s in sets:
        idx = S.indices(s)
        mats.append(S.matrix[idx][:, idx].tocsr())
    transfers = [SubsetOperator.build(S, a, b) for a, b in zip(sets, sets[1:])]

    if is_conflict_free(tree, sets[0]):
        coarse = block_diagonal_smoother(S, level=sets[0])
    elif allow_dense_coarse:
        coarse = _DenseCoarse(mats[0].toarray())
    else:
        raise ValidationError("coarsest level set is not conflict-free")

    smoothers: list[BlockSmoother | None] = [None]
    for s in sets[1:]:
        if smoother in ("bdiag", "block_diagonal"):
            smoothers.append(block_diagonal_smoother(S, level=s))
        elif smoother in ("super", "super_node"):
            smoothers.append(build_supernode_smoother(S, level_set=s))
        else:
            raise ValueError(f"unknown smoother {smoother!r}")
    return Hierarchy(S, tuple(sets), mats, transfers, smoothers, coarse, smoother, pre_smooth, post_smooth)


_COARSE_STEPS = {
    "two_level": ("v",),
    "v": ("v",),
    "w": ("w", "w"),
    "f": ("f", "v"),
}


def _psi(H: Hierarchy, j: int, g: np.ndarray, kind: str, transpose: bool) -> np.ndarray:
    H.calls[j] += 1
    if j == 0:
        return H.coarse.apply_transpose(g) if transpose else H.coarse.apply(g)
    steps = ["G"] * H.pre_smooth + list(_COARSE_STEPS[kind]) + ["G"] * H.post_smooth
    if transpose:
        steps.reverse()
    A = H.matrices[j]
    T = H.transfers[j - 1]
    G = H.smoothers[j]
    x = None
    for step in steps:
        r = g if x is None else g - A @ x
        if step == "G":
            dx = G.apply_transpose(r) if transpose else G.apply(r)
        else:
            dx = T.prolong(_psi(H, j - 1, T.restrict(r), step, transpose))
        x = dx if x is None else x + dx
    return np.zeros_like(g) if x is None else x


def cycle_apply(H: Hierarchy, kind: str, g, transpose: bool = False) -> np.ndarray:
    """Apply the cycle ``Psi`` (or its transpose) at the finest level."""
    if kind not in _COARSE_STEPS:
        raise ValueError(f"unknown cycle {kind!r}")
    if kind == "two_level" and H.n_levels > 2:
        raise ValidationError("two_level cycle needs a hierarchy with at most two levels")
    g = np.asarray(g, dtype=float)
    K = H.n_levels
    if g.shape != (H.size(K - 1),):
        raise DimensionError(f"rhs of shape {g.shape}, expected ({H.size(K - 1)},)")
    return _psi(H, K - 1, g, kind, transpose)


def cycle_matrix(H: Hierarchy, kind: str, transpose: bool = False, max_order: int = MAX_DENSE) -> np.ndarray:
    n = H.size(H.n_levels - 1)
    if n > max_order:
        raise DimensionError(f"order {n} exceeds the dense size guard {max_order}")
    return np.column_stack([cycle_apply(H, kind, e, transpose) for e in np.eye(n)])


def iteration_matrix_norms(H: Hierarchy, kind: str, max_order: int = MAX_DENSE) -> dict:
    """Spectral radius and eigenvalues of ``I - Psi S`` by dense materialization."""
    Psi = cycle_matrix(H, kind, max_order=max_order)
    S = H.matrices[-1].toarray()
    M = np.eye(S.shape[0]) - Psi @ S
    eig = np.linalg.eigvals(M)
    return {"spectral_radius": float(np.max(np.abs(eig))) if eig.size else 0.0, "eigenvalues": eig, "matrix": M}
