"""Arborescence topology and the vertex sets used by the solvers.

Vertex and arc ids are dense and 1-based.  Arc ``k`` is stored at position
``k - 1`` of :attr:`DirectedTree.arcs`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import TreeStructureError

__all__ = [
    "DirectedTree",
    "VertexMetrics",
    "LevelFamily",
    "Subgraph",
    "build_tree",
    "vertex_metrics",
    "subtree_vertices",
    "inner_subgraph",
    "level_family",
    "is_conflict_free",
    "contract_supernode",
    "path_tree",
    "star_tree",
    "full_tree",
    "branching_tree",
]


@dataclass(frozen=True)
class DirectedTree:
    n_vertices: int
    arcs: tuple[tuple[int, int], ...]
    root: int
    parent: dict[int, int] = field(repr=False, compare=False)
    in_arc: dict[int, int] = field(repr=False, compare=False)
    out_arcs: dict[int, tuple[int, ...]] = field(repr=False, compare=False)
    preorder: tuple[int, ...] = field(repr=False, compare=False)
    depth: dict[int, int] = field(repr=False, compare=False)
    height: dict[int, int] = field(repr=False, compare=False)

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    @property
    def vertices(self) -> range:
        return range(1, self.n_vertices + 1)

    def tail(self, k: int) -> int:
        return self.arcs[k - 1][0]

    def head(self, k: int) -> int:
        return self.arcs[k - 1][1]

    def children(self, i: int) -> tuple[int, ...]:
        return tuple(self.head(k) for k in self.out_arcs[i])

    def is_leaf(self, i: int) -> bool:
        return not self.out_arcs[i]

    @property
    def inner_vertices(self) -> tuple[int, ...]:
        """Non-leaf vertices in pre-order."""
        return tuple(v for v in self.preorder if self.out_arcs[v])

    @property
    def leaves(self) -> tuple[int, ...]:
        return tuple(v for v in self.preorder if not self.out_arcs[v])

    @property
    def tree_height(self) -> int:
        return self.height[self.root]

    def check_vertex(self, i: int) -> None:
        if not (isinstance(i, (int,)) and 1 <= i <= self.n_vertices):
            raise TreeStructureError(f"unknown vertex {i!r}")


@dataclass(frozen=True)
class VertexMetrics:
    depth: dict[int, int]
    height: dict[int, int]
    tree_height: int


@dataclass(frozen=True)
class LevelFamily:
    """Nested vertex sets for a multi-level hierarchy, coarsest first."""

    variant: str
    sets: tuple[tuple[int, ...], ...]

    @property
    def n_levels(self) -> int:
        return len(self.sets)


@dataclass(frozen=True)
class Subgraph:
    vertices: tuple[int, ...]
    arcs: tuple[tuple[int, int, int], ...]  # (arc id, tail, head)


def build_tree(arc_list: Sequence[tuple[int, int]], n_vertices: int | None = None) -> DirectedTree:
    """Validate ``arc_list`` as an arborescence and derive all incidence maps.

    Arc ``k`` is ``arc_list[k - 1]``.  ``n_vertices`` is required only for the
    single-vertex tree (empty arc list).
    """
    arcs = tuple((int(t), int(h)) for t, h in arc_list)
    if n_vertices is None:
        if not arcs:
            raise TreeStructureError("empty arc list requires n_vertices=1")
        n_vertices = max(max(a) for a in arcs)
    n = int(n_vertices)
    if n < 1:
        raise TreeStructureError("tree needs at least one vertex")
    for k, (t, h) in enumerate(arcs, start=1):
        if not (1 <= t <= n and 1 <= h <= n):
            raise TreeStructureError(f"arc {k} = ({t}, {h}) references a vertex outside 1..{n}")
        if t == h:
            raise TreeStructureError(f"cycle detected: arc {k} is a self-loop at vertex {t}")

    parent: dict[int, int] = {}
    in_arc: dict[int, int] = {}
    out: dict[int, list[int]] = {v: [] for v in range(1, n + 1)}
    for k, (t, h) in enumerate(arcs, start=1):
        if h in in_arc:
            raise TreeStructureError(
                f"vertex {h} has two incoming arcs ({in_arc[h]} and {k})"
            )
        in_arc[h] = k
        parent[h] = t
        out[t].append(k)

    roots = [v for v in range(1, n + 1) if v not in in_arc]
    if not roots:
        raise TreeStructureError("cycle detected: every vertex has an incoming arc")
    if len(roots) > 1:
        raise TreeStructureError(f"multiple roots: {roots}")
    root = roots[0]

    preorder: list[int] = []
    depth = {root: 0}
    stack = [root]
    while stack:
        v = stack.pop()
        preorder.append(v)
        for k in reversed(out[v]):
            c = arcs[k - 1][1]
            depth[c] = depth[v] + 1
            stack.append(c)
    if len(preorder) != n:
        missing = sorted(set(range(1, n + 1)) - set(preorder))
        raise TreeStructureError(
            f"cycle detected or vertices unreachable from root {root}: {missing}"
        )

    height: dict[int, int] = {}
    for v in reversed(preorder):
        hs = [height[arcs[k - 1][1]] for k in out[v]]
        height[v] = 1 + max(hs) if hs else 0

    return DirectedTree(
        n_vertices=n,
        arcs=arcs,
        root=root,
        parent=parent,
        in_arc=in_arc,
        out_arcs={v: tuple(ks) for v, ks in out.items()},
        preorder=tuple(preorder),
        depth=depth,
        height=height,
    )


def vertex_metrics(tree: DirectedTree) -> VertexMetrics:
    return VertexMetrics(dict(tree.depth), dict(tree.height), tree.tree_height)


def subtree_vertices(tree: DirectedTree, i: int) -> tuple[int, ...]:
    """Vertices of the subtree rooted at ``i`` in pre-order (``i`` first)."""
    tree.check_vertex(i)
    result = []
    stack = [i]
    while stack:
        v = stack.pop()
        result.append(v)
        stack.extend(reversed(tree.children(v)))
    return tuple(result)


def inner_subgraph(tree: DirectedTree) -> Subgraph:
    inner = tree.inner_vertices
    inner_set = set(inner)
    arcs = tuple(
        (k, t, h)
        for k, (t, h) in enumerate(tree.arcs, start=1)
        if t in inner_set and h in inner_set
    )
    return Subgraph(inner, arcs)


def is_conflict_free(tree: DirectedTree, vertices: Iterable[int]) -> bool:
    """True iff no two of ``vertices`` are joined by an arc."""
    vs = set(vertices)
    return not any(t in vs and h in vs for t, h in tree.arcs)


def level_family(tree: DirectedTree, variant: str = "top_down", coarse: str = "even") -> LevelFamily:
    """Nested inner-vertex sets by depth threshold.

    ``top_down`` grows downward from the root ({depth <= 0}, {depth <= 1}, ...);
    ``bottom_up`` grows upward from the deepest inner vertices.  ``even_odd``
    is a two-level family whose coarse set holds the inner vertices of even
    depth (or odd depth with ``coarse="odd"``).
    """
    inner = tree.inner_vertices
    if not inner:
        raise TreeStructureError("level family needs a nonempty inner subgraph")
    h = max(tree.depth[v] for v in inner)
    if variant == "top_down":
        sets = [tuple(v for v in inner if tree.depth[v] <= d) for d in range(h + 1)]
    elif variant == "bottom_up":
        sets = [tuple(v for v in inner if tree.depth[v] >= d) for d in range(h, -1, -1)]
    elif variant == "even_odd":
        parity = {"even": 0, "odd": 1}[coarse]
        coarse_set = tuple(v for v in inner if tree.depth[v] % 2 == parity)
        if not coarse_set:
            raise TreeStructureError(f"no inner vertices of {coarse} depth")
        sets = [coarse_set, inner] if len(coarse_set) < len(inner) else [inner]
    else:
        raise ValueError(f"unknown level family variant {variant!r}")
    return LevelFamily(variant, tuple(sets))


def contract_supernode(tree: DirectedTree, i: int) -> tuple[DirectedTree, dict[int, int]]:
    """Contract all outgoing arcs of ``i``, merging ``i`` with its children.

    Returns the contracted tree (densely renumbered, vertex and arc order
    preserved) and a map from old to new vertex ids.
    """
    tree.check_vertex(i)
    if tree.is_leaf(i):
        raise TreeStructureError(f"vertex {i} is a leaf; nothing to contract")
    merged = set(tree.children(i))
    survivors = [v for v in tree.vertices if v not in merged]
    new_id = {v: n for n, v in enumerate(survivors, start=1)}
    vmap = {v: new_id[i] if v in merged else new_id[v] for v in tree.vertices}
    removed = set(tree.out_arcs[i])
    new_arcs = [
        (vmap[t], vmap[h])
        for k, (t, h) in enumerate(tree.arcs, start=1)
        if k not in removed
    ]
    return build_tree(new_arcs, n_vertices=len(survivors)), vmap


def path_tree(n: int) -> DirectedTree:
    """Path 1 -> 2 -> ... -> n."""
    return build_tree([(v, v + 1) for v in range(1, n)], n_vertices=n)


def star_tree(n_leaves: int) -> DirectedTree:
    """Root 1 with leaves 2..n_leaves+1."""
    return build_tree([(1, v) for v in range(2, n_leaves + 2)], n_vertices=n_leaves + 1)


def full_tree(branching: int, depth: int) -> DirectedTree:
    """Full tree with the given branching factor; vertices numbered breadth-first."""
    return branching_tree([branching] * depth)


def branching_tree(schedule: Sequence[int]) -> DirectedTree:
    """Tree whose vertices at depth ``d`` each have ``schedule[d]`` children."""
    arcs = []
    level = [1]
    nxt = 2
    for r in schedule:
        new_level = []
        for v in level:
            for _ in range(int(r)):
                arcs.append((v, nxt))
                new_level.append(nxt)
                nxt += 1
        level = new_level
    return build_tree(arcs, n_vertices=nxt - 1)
