"""Unrestarted right-preconditioned GMRES with residual history and solve counts.

GMRES runs on ``A P^{-T}`` and the iterate is mapped back through ``P^{-T}``.
Arnoldi uses modified Gram-Schmidt with one reorthogonalization pass when
the projected components remain above ``REORTH_TOL``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .factor import SolveCounter

__all__ = ["SolveReport", "gmres", "BREAKDOWN_TOL", "REORTH_TOL"]

BREAKDOWN_TOL = 1e-14
REORTH_TOL = 1e-8


@dataclass
class SolveReport:
    iterations: int
    relative_residuals: list[float]
    converged: bool
    solution: np.ndarray
    true_relative_residual: float
    breakdown: bool = False
    solve_counts: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "breakdown": self.breakdown,
            "final_relative_residual": self.relative_residuals[-1],
            "true_relative_residual": self.true_relative_residual,
            "solve_counts": self.solve_counts,
        }


def _as_operator(A) -> Callable[[np.ndarray], np.ndarray]:
    if callable(A):
        return A
    return lambda v: A @ v


def _transpose_op(precond):
    if precond is None:
        return lambda v: v
    if hasattr(precond, "apply_transpose"):
        return precond.apply_transpose
    return _as_operator(precond)


def _counts(counter: SolveCounter | None) -> dict:
    if counter is None:
        return {}
    setup = counter.total("setup")
    it = counter.total("iteration")
    return {"setup": setup, "iteration": it, "total": setup + it}


def gmres(
    apply_A,
    precond=None,
    b=None,
    tol: float = 1e-8,
    max_iter: int = 100,
    counter: SolveCounter | None = None,
) -> SolveReport:
    """Solve ``A x = b`` from a zero initial guess.

    ``apply_A`` is a callable or matrix; ``precond`` is ``None`` or an object
    with ``apply_transpose`` (the map ``P^{-T}``).  Stops once the relative
    residual is at most ``tol`` or after ``max_iter`` iterations.  Solves
    issued during the iteration are charged to ``counter``'s ``"iteration"``
    phase.  ``relative_residuals[k]`` is the residual after ``k`` iterations.
    """
    A = _as_operator(apply_A)
    PT = _transpose_op(precond)
    if counter is None and precond is not None:
        counter = getattr(precond, "counter", None)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    beta = float(np.linalg.norm(b))
    if not np.isfinite(beta):
        raise FloatingPointError("non-finite right-hand side")
    if beta == 0.0:
        return SolveReport(0, [1.0], True, np.zeros(n), 0.0, solve_counts=_counts(counter))

    def op(v):
        if counter is not None:
            with counter.scope("iteration"):
                return A(PT(v))
        return A(PT(v))

    m = max(0, int(max_iter))
    V = np.zeros((m + 1, n))
    Hs = np.zeros((m + 1, m))
    cs = np.zeros(m)
    sn = np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    V[0] = b / beta
    hist = [1.0]
    k = 0
    breakdown = False
    converged = False
    while k < m:
        w = op(V[k])
        if not np.all(np.isfinite(w)):
            raise FloatingPointError(f"non-finite operator output at iteration {k + 1}")
        for j in range(k + 1):
            Hs[j, k] = V[j] @ w
            w = w - Hs[j, k] * V[j]
        proj = V[: k + 1] @ w
        if np.max(np.abs(proj)) > REORTH_TOL * max(np.linalg.norm(w), 1e-300):
            for j in range(k + 1):
                c = V[j] @ w
                Hs[j, k] += c
                w = w - c * V[j]
        hn = float(np.linalg.norm(w))
        Hs[k + 1, k] = hn
        for j in range(k):
            t = cs[j] * Hs[j, k] + sn[j] * Hs[j + 1, k]
            Hs[j + 1, k] = -sn[j] * Hs[j, k] + cs[j] * Hs[j + 1, k]
            Hs[j, k] = t
        a, c = Hs[k, k], Hs[k + 1, k]
        r = float(np.hypot(a, c))
        if r == 0.0:
            breakdown = True
            break
        cs[k], sn[k] = a / r, c / r
        Hs[k, k] = r
        Hs[k + 1, k] = 0.0
        g[k + 1] = -sn[k] * g[k]
        g[k] = cs[k] * g[k]
        k += 1
        rel = abs(g[k]) / beta
        hist.append(float(rel))
        if rel <= tol:
            converged = True
            break
        if hn <= BREAKDOWN_TOL * beta:
            # invariant subspace reached: the least-squares solution is exact
            breakdown = True
            break
        V[k] = w / hn

    if k:
        yk = np.linalg.solve(np.triu(Hs[:k, :k]), g[:k]) if k else np.zeros(0)
        xt = V[:k].T @ yk
    else:
        xt = np.zeros(n)
    if counter is not None:
        with counter.scope("iteration"):
            x = PT(xt)
    else:
        x = PT(xt)
    true_rel = float(np.linalg.norm(b - A(x)) / beta)
    if breakdown and not converged:
        converged = true_rel <= tol
    return SolveReport(k, hist, converged, x, true_rel, breakdown, _counts(counter))
