"""Dense reference constructions, written independently of the package internals.

Everything here works from the raw blocks of a system and plain numpy, so
agreement with the package is evidence rather than tautology.
"""

from __future__ import annotations

import numpy as np


def offsets(sys):
    """Global offsets: x blocks in pre-order, then y blocks by arc id."""
    xo, yo, p = {}, {}, 0
    for v in sys.tree.preorder:
        xo[v] = p
        p += sys.B[v].shape[0]
    for k in range(1, len(sys.tree.arcs) + 1):
        yo[k] = p
        p += sys.D[k].shape[0]
    return xo, yo, p


def dense_rows(sys) -> np.ndarray:
    """Global matrix written row by row from the vertex and arc equations."""
    xo, yo, N = offsets(sys)
    A = np.zeros((N, N))
    arcs = sys.tree.arcs
    for v in sys.tree.vertices:
        r = slice(xo[v], xo[v] + sys.B[v].shape[0])
        A[r, r] += sys.B[v]
        for k, (t, h) in enumerate(arcs, start=1):
            c = slice(yo[k], yo[k] + sys.D[k].shape[0])
            if t == v:
                A[r, c] += sys.E_out[k].T
            if h == v:
                A[r, c] -= sys.E_in[k].T
    for k, (t, h) in enumerate(arcs, start=1):
        r = slice(yo[k], yo[k] + sys.D[k].shape[0])
        A[r, xo[t]:xo[t] + sys.B[t].shape[0]] += sys.E_out[k]
        A[r, xo[h]:xo[h] + sys.B[h].shape[0]] -= sys.E_in[k]
        A[r, r] -= sys.D[k]
    return A


def global_rhs(sys) -> np.ndarray:
    xo, yo, N = offsets(sys)
    b = np.zeros(N)
    for v in sys.tree.vertices:
        b[xo[v]:xo[v] + len(sys.h[v])] = sys.h[v]
    for k in yo:
        b[yo[k]:yo[k] + len(sys.f[k])] = sys.f[k]
    return b


def _children(sys, i):
    return [(k, h) for k, (t, h) in enumerate(sys.tree.arcs, start=1) if t == i]


def nested_labels(sys, i):
    """Labels ('x', v, r) / ('y', k, r) of the nested subtree vector at ``i``."""
    out = []
    for k, j in _children(sys, i):
        out += nested_labels(sys, j)
    out += [("x", i, r) for r in range(sys.B[i].shape[0])]
    for k, _ in _children(sys, i):
        out += [("y", k, r) for r in range(sys.D[k].shape[0])]
    return out


def _pos(labels):
    return {lab: n for n, lab in enumerate(labels)}


def _coupling(sys, i, labels_children):
    """Rows of the outgoing arcs of ``i`` against (children..., x_i)."""
    outs = _children(sys, i)
    pos = _pos(labels_children)
    ni = sys.B[i].shape[0]
    nch = len(labels_children)
    rows = []
    for k, j in outs:
        lk = sys.D[k].shape[0]
        R = np.zeros((lk, nch + ni))
        for r in range(sys.B[j].shape[0]):
            R[:, pos[("x", j, r)]] = -sys.E_in[k][:, r]
        R[:, nch:] = sys.E_out[k]
        rows.append(R)
    return np.vstack(rows) if rows else np.zeros((0, nch + ni))


def subtree_matrix(sys, i) -> np.ndarray:
    """``B_{<=i}`` by direct recursion in nested order."""
    outs = _children(sys, i)
    blocks, labs = [], []
    for k, j in outs:
        blocks.append(subtree_matrix(sys, j))
        labs += nested_labels(sys, j)
    ni = sys.B[i].shape[0]
    nch = sum(b.shape[0] for b in blocks)
    top = np.zeros((nch + ni, nch + ni))
    p = 0
    for b in blocks:
        top[p:p + b.shape[0], p:p + b.shape[0]] = b
        p += b.shape[0]
    top[nch:, nch:] = sys.B[i]
    C = _coupling(sys, i, labs)
    m = C.shape[0]
    D = np.zeros((m, m))
    q = 0
    for k, _ in outs:
        lk = sys.D[k].shape[0]
        D[q:q + lk, q:q + lk] = sys.D[k]
        q += lk
    return np.block([[top, C.T], [C, -D]])


def subtree_schur(sys, i) -> np.ndarray:
    """``S_{<=i}`` as the Schur complement of the dense ``B_{<=i}``."""
    M = subtree_matrix(sys, i)
    m = sum(sys.D[k].shape[0] for k, _ in _children(sys, i))
    n = M.shape[0] - m
    Bb, Ct, Dm = M[:n, :n], M[:n, n:], -M[n:, n:]
    return Ct.T @ np.linalg.solve(Bb, Ct) + Dm


def nested_precond_matrix(sys, i, child: str) -> np.ndarray:
    """Lower block-triangular nested preconditioner at ``i``.

    ``child="hook"`` recurses with hook children, ``child="exact"`` uses the
    exact subtree matrices for the children (the recursive preconditioner).
    """
    outs = _children(sys, i)
    if not outs:
        return sys.B[i].copy()
    blocks, labs = [], []
    for k, j in outs:
        blocks.append(nested_precond_matrix(sys, j, "hook") if child == "hook" else subtree_matrix(sys, j))
        labs += nested_labels(sys, j)
    ni = sys.B[i].shape[0]
    nch = sum(b.shape[0] for b in blocks)
    C = _coupling(sys, i, labs)
    m = C.shape[0]
    P = np.zeros((nch + ni + m, nch + ni + m))
    p = 0
    for b in blocks:
        P[p:p + b.shape[0], p:p + b.shape[0]] = b
        p += b.shape[0]
    P[nch:nch + ni, nch:nch + ni] = sys.B[i]
    P[nch + ni:, :nch + ni] = C
    P[nch + ni:, nch + ni:] = -subtree_schur(sys, i)
    return P


def to_global(sys, M_nested: np.ndarray) -> np.ndarray:
    """Re-index a matrix in nested root order to the global layout."""
    xo, yo, N = offsets(sys)
    labs = nested_labels(sys, sys.tree.root)
    idx = np.array([(xo[v] if t == "x" else yo[v]) + r for t, v, r in labs])
    G = np.zeros((N, N))
    G[np.ix_(idx, idx)] = M_nested
    return G


def nested_index(sys) -> np.ndarray:
    xo, yo, _ = offsets(sys)
    labs = nested_labels(sys, sys.tree.root)
    return np.array([(xo[v] if t == "x" else yo[v]) + r for t, v, r in labs], dtype=int)


def schur_arc_order(sys) -> np.ndarray:
    A = dense_rows(sys)
    n = sum(sys.B[v].shape[0] for v in sys.tree.vertices)
    return A[n:, :n] @ np.linalg.solve(A[:n, :n], A[:n, n:]) - A[n:, n:]


def vertex_block_index(sys) -> tuple[np.ndarray, dict]:
    """Arc-order positions listed in vertex-block order, and block ranges per inner vertex."""
    xo, yo, _ = offsets(sys)
    n = sum(sys.B[v].shape[0] for v in sys.tree.vertices)
    idx, ranges, p = [], {}, 0
    for v in sys.tree.preorder:
        outs = _children(sys, v)
        if not outs:
            continue
        start = p
        for k, _ in outs:
            lk = sys.D[k].shape[0]
            idx += list(range(yo[k] - n, yo[k] - n + lk))
            p += lk
        ranges[v] = (start, p)
    return np.array(idx, dtype=int), ranges


def schur_vertex_order(sys) -> np.ndarray:
    S = schur_arc_order(sys)
    idx, _ = vertex_block_index(sys)
    return S[np.ix_(idx, idx)]


def mgs_gmres(A: np.ndarray, b: np.ndarray, max_iter: int) -> list[float]:
    """Textbook GMRES residual history via explicit least squares per step."""
    beta = np.linalg.norm(b)
    V = [b / beta]
    H = np.zeros((max_iter + 1, max_iter))
    hist = [1.0]
    for k in range(max_iter):
        w = A @ V[k]
        for j in range(k + 1):
            H[j, k] = V[j] @ w
            w = w - H[j, k] * V[j]
        H[k + 1, k] = np.linalg.norm(w)
        e = np.zeros(k + 2)
        e[0] = beta
        y, *_ = np.linalg.lstsq(H[:k + 2, :k + 1], e, rcond=None)
        hist.append(float(np.linalg.norm(e - H[:k + 2, :k + 1] @ y) / beta))
        if H[k + 1, k] < 1e-14:
            break
        V.append(w / H[k + 1, k])
    return hist
