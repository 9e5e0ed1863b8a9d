"""Instance generators: random systems, scenario-tree QPs, multiple shooting."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .blocks import BlockFactors, TreeCoupledSystem, dense_schur, make_system
from .direct import compute_arrowhead_schur
from .errors import NotPositiveDefiniteError, SingularBlockError, TreeStructureError, ValidationError
from .factor import factorize
from .tree import DirectedTree, branching_tree, build_tree, path_tree

__all__ = [
    "gen_random_system",
    "ScenarioQPConfig",
    "gen_scenario_qp",
    "ShootingConfig",
    "gen_multiple_shooting",
    "lotka_volterra",
    "shooting_tree",
    "MAX_ATTEMPTS",
]

MAX_ATTEMPTS = 20


def _as_tree(tree) -> DirectedTree:
    if isinstance(tree, DirectedTree):
        return tree
    arcs = list(tree)
    return build_tree(arcs, n_vertices=None if arcs else 1)


def _validate(sys: TreeCoupledSystem) -> None:
    """Raise unless every ``B_i`` is invertible and every Schur complement is SPD."""
    fac = BlockFactors(sys).factor_all()
    if sys.layout.m:
        S = dense_schur(sys)
        factorize(0.5 * (S + S.T), "cholesky", tag="S")
        compute_arrowhead_schur(sys, fac)


def gen_random_system(
    tree,
    n_range: tuple[int, int] = (2, 6),
    l_range: tuple[int, int] = (1, 2),
    seed: int = 0,
    style: str = "spd",
    d_style: str = "psd",
    rhs: bool = True,
) -> TreeCoupledSystem:
    """Random tree-coupled system on ``tree`` (a :class:`DirectedTree` or arc list).

    ``style="spd"`` draws SPD vertex blocks; ``style="kkt"`` draws
    ``[[H, A^T], [A, 0]]`` blocks with one constraint row per three unknowns.
    ``d_style`` picks the arc blocks: ``"zero"``, ``"identity"``, ``"psd"``
    (small random positive semidefinite) or ``"pd"``.  Arc widths never exceed
    the size of the head block (for ``"kkt"``, its null-space dimension).  Draws are repeated until the instance passes
    validation; :class:`ValidationError` after ``MAX_ATTEMPTS`` failures.
    """
    tree = _as_tree(tree)
    rng = np.random.default_rng(seed)
    lo, hi = n_range
    if lo < 1 or hi < lo or l_range[0] < 1 or l_range[1] < l_range[0]:
        raise ValidationError("dimension ranges must be positive and ordered")
    for _ in range(MAX_ATTEMPTS):
        n = {i: int(rng.integers(lo, hi + 1)) for i in tree.vertices}
        B, h = {}, {}
        primal = {}   # columns an arc may touch, and the room left for its rows
        for i in tree.vertices:
            if style == "spd":
                primal[i] = (n[i], n[i])
                G = rng.standard_normal((n[i], n[i]))
                B[i] = G @ G.T / n[i] + 0.5 * np.eye(n[i])
            elif style == "kkt":
                nc = n[i] // 3
                nz = n[i] - nc
                G = rng.standard_normal((nz, nz))
                H = G @ G.T / nz + 0.1 * np.eye(nz)
                A = rng.standard_normal((nc, nz))
                B[i] = np.block([[H, A.T], [A, np.zeros((nc, nc))]])
                # couplings act on the primal part only, so S stays definite
                primal[i] = (nz, nz - nc)
            else:
                raise ValueError(f"unknown style {style!r}")
            h[i] = rng.standard_normal(n[i]) if rhs else np.zeros(n[i])
        Eo, Ei, D, f = {}, {}, {}, {}
        for k, (t, hd) in enumerate(tree.arcs, start=1):
            lk = int(rng.integers(l_range[0], l_range[1] + 1))
            lk = min(lk, primal[hd][1])
            Eo[k] = np.zeros((lk, n[t]))
            Ei[k] = np.zeros((lk, n[hd]))
            Eo[k][:, : primal[t][0]] = rng.standard_normal((lk, primal[t][0]))
            Ei[k][:, : primal[hd][0]] = rng.standard_normal((lk, primal[hd][0]))
            if d_style == "zero":
                D[k] = np.zeros((lk, lk))
            elif d_style == "identity":
                D[k] = np.eye(lk)
            elif d_style == "psd":
                G = rng.standard_normal((lk, lk))
                D[k] = 0.1 * G @ G.T
            elif d_style == "pd":
                G = rng.standard_normal((lk, lk))
                D[k] = 0.1 * G @ G.T + 0.1 * np.eye(lk)
            else:
                raise ValueError(f"unknown d_style {d_style!r}")
            f[k] = rng.standard_normal(lk) if rhs else np.zeros(lk)
        sys = make_system(tree, B, h, Eo, Ei, D, f)
        try:
            _validate(sys)
        except (SingularBlockError, NotPositiveDefiniteError):
            continue
        return sys
    raise ValidationError(f"no valid instance after {MAX_ATTEMPTS} attempts (seed {seed})")


# -- scenario-tree QP ----------------------------------------------------------

@dataclass
class ScenarioQPConfig:
    """Scenario-tree QP: every vertex holds one stage ``(s, u, s+)``.

    ``branching[d]`` is the number of children of each vertex at depth ``d``;
    levels past the end of the list have no children.  ``n_couple`` leading
    state entries are shared along every arc.
    """

    branching: Sequence[int] = (2, 2, 2)
    n_state: int = 2
    n_control: int = 1
    n_constraint: int = 0
    n_couple: int | None = None
    style: str = "kkt"
    lam: float = 1e-2
    delta: float = 1e-2
    seed: int = 0

    @property
    def depth(self) -> int:
        return len(self.branching)

    def to_meta(self) -> dict:
        d = asdict(self)
        d["branching"] = list(self.branching)
        d["generator"] = "scenario"
        return d


def gen_scenario_qp(cfg: ScenarioQPConfig) -> TreeCoupledSystem:
    nx, nu, nc = cfg.n_state, cfg.n_control, cfg.n_constraint
    nk = nx if cfg.n_couple is None else cfg.n_couple
    if min(nx, nu) < 1 or nc < 0:
        raise ValidationError("state and control dimensions must be positive")
    if not 1 <= nk <= nx:
        raise ValidationError(f"coupling width {nk} must lie in [1, {nx}]")
    if cfg.style not in ("kkt", "homotopy"):
        raise ValueError(f"unknown style {cfg.style!r}")
    if cfg.style == "homotopy" and (cfg.lam <= 0 or cfg.delta <= 0):
        raise ValidationError("homotopy parameters must be positive")
    tree = branching_tree(list(cfg.branching)) if cfg.branching else build_tree([], n_vertices=1)
    rng = np.random.default_rng(cfg.seed)
    nz = 2 * nx + nu
    Adyn = 0.9 * np.eye(nx) + 0.1 * rng.standard_normal((nx, nx))
    Bdyn = rng.standard_normal((nx, nu))
    homotopy = cfg.style == "homotopy"
    B, h = {}, {}
    for i in tree.vertices:
        L = rng.standard_normal((nz, nz)) / np.sqrt(nz)
        H = L @ L.T + 1e-2 * np.eye(nz)
        rows = [np.hstack([-Adyn, -Bdyn, np.eye(nx)])]
        if nc:
            rows.append(rng.standard_normal((nc, nz)))
        if i == tree.root:
            rows.append(np.hstack([np.eye(nx), np.zeros((nx, nu + nx))]))
        A = np.vstack(rows)
        p = A.shape[0]
        if homotopy:
            B[i] = np.block([[H + cfg.lam * np.eye(nz), A.T], [A, -cfg.delta * np.eye(p)]])
        else:
            B[i] = np.block([[H, A.T], [A, np.zeros((p, p))]])
        g = rng.standard_normal(nz)
        b = np.zeros(p)
        if i == tree.root:
            b[-nx:] = rng.standard_normal(nx)
        h[i] = np.concatenate([-g, b])
    Eo, Ei, D, f = {}, {}, {}, {}
    for k, (t, hd) in enumerate(tree.arcs, start=1):
        eo = np.zeros((nk, B[t].shape[0]))
        ei = np.zeros((nk, B[hd].shape[0]))
        for r in range(nk):
            eo[r, nx + nu + r] = 1.0   # parent s+
            ei[r, r] = 1.0             # child s
        Eo[k], Ei[k] = eo, ei
        D[k] = cfg.delta * np.eye(nk) if homotopy else np.zeros((nk, nk))
        f[k] = np.zeros(nk)
    return make_system(tree, B, h, Eo, Ei, D, f)


# -- multiple shooting ---------------------------------------------------------

def lotka_volterra(y, u, c1: float = 0.4, c2: float = 0.2) -> np.ndarray:
    y1, y2 = y
    return np.array([y1 - y1 * y2 - c1 * y1 * u, -y2 + y1 * y2 - c2 * y2 * u])


def _lv_jac(y, u, c1, c2):
    y1, y2 = y
    Jy = np.array([[1.0 - y2 - c1 * u, -y1], [y2, -1.0 + y1 - c2 * u]])
    Ju = np.array([-c1 * y1, -c2 * y2])
    return Jy, Ju


@dataclass
class ShootingConfig:
    """Multiple-shooting discretization of a Lotka-Volterra tracking problem."""

    intervals: int = 8
    steps: int = 40
    tree: str = "shallow"
    T: float = 12.0
    c1: float = 0.4
    c2: float = 0.2
    beta: float = 0.1
    u_bar: float = 0.5
    y_d: tuple[float, float] = (1.0, 1.0)
    y0: tuple[float, float] = (0.5, 0.7)

    def to_meta(self) -> dict:
        d = asdict(self)
        d["y_d"] = list(self.y_d)
        d["y0"] = list(self.y0)
        d["generator"] = "shooting"
        return d


def shooting_tree(intervals: int, shape: str) -> tuple[DirectedTree, list[int]]:
    """Tree over the subintervals and the vertex of each interval.

    ``path`` chains the intervals in time order, ``shallow`` hangs every
    interval below interval 0, ``binary`` places them by recursive middle
    split (vertex ids in pre-order).
    """
    Q = intervals
    if Q < 1:
        raise TreeStructureError("need at least one subinterval")
    if shape == "path":
        return path_tree(Q), list(range(1, Q + 1))
    if shape == "shallow":
        arcs = [(1, q + 1) for q in range(1, Q)]
        return build_tree(arcs, n_vertices=Q), list(range(1, Q + 1))
    if shape == "binary":
        vertex = [0] * Q
        arcs: list[tuple[int, int]] = []
        counter = [0]

        def place(lo, hi, parent):
            if lo >= hi:
                return
            mid = (lo + hi) // 2
            counter[0] += 1
            v = counter[0]
            vertex[mid] = v
            if parent is not None:
                arcs.append((parent, v))
            place(lo, mid, v)
            place(mid + 1, hi, v)

        place(0, Q, None)
        return build_tree(arcs, n_vertices=Q), vertex
    raise TreeStructureError(f"unknown shooting tree shape {shape!r}")


def _tree_path(tree: DirectedTree, a: int, b: int) -> list[int]:
    def up(v):
        out = [v]
        while tree.parent.get(v) is not None:
            v = tree.parent[v]
            out.append(v)
        return out

    pa, pb = up(a), up(b)
    sb = set(pb)
    lca = next(v for v in pa if v in sb)
    left = pa[: pa.index(lca) + 1]
    right = pb[: pb.index(lca)]
    return left + right[::-1]


def gen_multiple_shooting(cfg: ShootingConfig) -> TreeCoupledSystem:
    """Gauss-Newton KKT system of the shooting problem, one vertex per interval.

    Each interval owns states ``s_0..s_E``, controls ``u_0..u_{E-1}`` and the
    multipliers of its Euler steps; interval 0 also pins ``s_0 = y0``.  Nodes
    are cold-started at ``y0`` and integrated with ``u_bar``, so the matching
    rows carry the continuity defects.  Interfaces between intervals that are
    not adjacent in the tree run through copies of the interface state held by
    the vertices on the connecting path.
    """
    Q, E = cfg.intervals, cfg.steps
    if E < 1:
        raise ValidationError("need at least one Euler step per subinterval")
    tree, vert = shooting_tree(Q, cfg.tree)
    interval_of = {v: q for q, v in enumerate(vert)}
    dt = cfg.T / (Q * E)
    yd = np.asarray(cfg.y_d, dtype=float)
    y0 = np.asarray(cfg.y0, dtype=float)
    ns = 2 * (E + 1)
    nzb = ns + E   # states then controls

    # reference trajectories
    ref = []
    for _ in range(Q):
        s = np.empty((E + 1, 2))
        s[0] = y0
        for e in range(E):
            s[e + 1] = s[e] + dt * lotka_volterra(s[e], cfg.u_bar, cfg.c1, cfg.c2)
        ref.append(s)

    # route every interface (q-1 -> q) along the tree path
    copies: dict[int, list[int]] = {v: [] for v in tree.vertices}   # interface ids
    links: list[tuple[int, int, int]] = []   # (interface q, from vertex, to vertex)
    for q in range(1, Q):
        path = _tree_path(tree, vert[q - 1], vert[q])
        for v in path[1:-1]:
            copies[v].append(q)
        for a, b in zip(path, path[1:]):
            links.append((q, a, b))
    n_copy = {q: 0 for q in range(1, Q)}
    for v in tree.vertices:
        for q in copies[v]:
            n_copy[q] += 1

    def state_idx(e):
        return np.arange(2 * e, 2 * e + 2)

    def item(v, q, role):
        """Index and reference value of interface ``q``'s variable at ``v``."""
        iv = interval_of[v]
        if role == "end":
            return state_idx(E), ref[iv][E]
        if role == "start":
            return state_idx(0), ref[iv][0]
        c = copies[v].index(q)
        return nzb + 2 * c + np.arange(2), ref[q - 1][E]

    B, h = {}, {}
    for v in tree.vertices:
        q = interval_of[v]
        s = ref[q]
        nz = nzb + 2 * len(copies[v])
        w = np.zeros(nz)
        w[2:ns] = dt
        grad = np.zeros(nz)
        for e in range(1, E + 1):
            grad[state_idx(e)] = dt * (s[e] - yd)
        if q < Q - 1:
            share = dt / (n_copy[q + 1] + 1)
            w[state_idx(E)] = share
            grad[state_idx(E)] = share * (s[E] - yd)
        w[ns:nzb] = cfg.beta * dt
        for c, qq in enumerate(copies[v]):
            share = dt / (n_copy[qq] + 1)
            idx = nzb + 2 * c + np.arange(2)
            w[idx] = share
            grad[idx] = share * (ref[qq - 1][E] - yd)
        H = np.diag(w)
        rows = []
        for e in range(E):
            Jy, Ju = _lv_jac(s[e], cfg.u_bar, cfg.c1, cfg.c2)
            r = np.zeros((2, nz))
            r[:, state_idx(e + 1)] = np.eye(2)
            r[:, state_idx(e)] = -(np.eye(2) + dt * Jy)
            r[:, ns + e] = -dt * Ju
            rows.append(r)
        if q == 0:
            r = np.zeros((2, nz))
            r[:, state_idx(0)] = np.eye(2)
            rows.append(r)
        A = np.vstack(rows)
        p = A.shape[0]
        B[v] = np.block([[H, A.T], [A, np.zeros((p, p))]])
        # Euler residuals and the initial condition vanish at the reference.
        h[v] = np.concatenate([-grad, np.zeros(p)])

    rows_of_arc: dict[int, list] = {k: [] for k in range(1, tree.n_arcs + 1)}
    arc_of = {(t, hd): k for k, (t, hd) in enumerate(tree.arcs, start=1)}
    for q, a, b in links:
        role_a = "end" if a == vert[q - 1] else "copy"
        role_b = "start" if b == vert[q] else "copy"
        ia, ra = item(a, q, role_a)
        ib, rb = item(b, q, role_b)
        if (a, b) in arc_of:
            k, (it, rt), (ih, rh) = arc_of[(a, b)], (ia, ra), (ib, rb)
        else:
            k, (it, rt), (ih, rh) = arc_of[(b, a)], (ib, rb), (ia, ra)
        rows_of_arc[k].append((it, ih, rh - rt))

    Eo, Ei, D, f = {}, {}, {}, {}
    for k, (t, hd) in enumerate(tree.arcs, start=1):
        items = rows_of_arc[k]
        lk = 2 * len(items)
        eo = np.zeros((lk, B[t].shape[0]))
        ei = np.zeros((lk, B[hd].shape[0]))
        fk = np.zeros(lk)
        for r, (it, ih, d) in enumerate(items):
            eo[2 * r + np.arange(2), it] = 1.0
            ei[2 * r + np.arange(2), ih] = 1.0
            fk[2 * r:2 * r + 2] = d
        Eo[k], Ei[k], D[k], f[k] = eo, ei, np.zeros((lk, lk)), fk
    return make_system(tree, B, h, Eo, Ei, D, f)
