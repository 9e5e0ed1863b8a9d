"""Dense factorizations with a counter of tagged subsystem solves.

The counter is the cost metric of the package: every column solved through a
factorization that carries a vertex tag is charged to that vertex.
"""

from __future__ import annotations

import threading
import warnings
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, NotPositiveDefiniteError, SingularBlockError

__all__ = ["SolveCounter", "Factorization", "factorize", "solve", "solve_transpose"]

PIVOT_TOL = 1e-14


class SolveCounter:
    """Per-vertex solve counts, attributable to named phases.

    Increments are guarded by a lock so that concurrent solves against shared
    factorizations stay consistent.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self.phase = "setup"
        self.by_phase: dict[str, Counter] = {}

    def add(self, tag, ncols: int) -> None:
        with self._lock:
            self.by_phase.setdefault(self.phase, Counter())[tag] += ncols

    @contextmanager
    def scope(self, phase: str):
        prev = self.phase
        self.phase = phase
        try:
            yield self
        finally:
            self.phase = prev

    def counts(self, phase: str | None = None) -> Counter:
        if phase is not None:
            return Counter(self.by_phase.get(phase, {}))
        total = Counter()
        for c in self.by_phase.values():
            total.update(c)
        return total

    def total(self, phase: str | None = None) -> int:
        return sum(self.counts(phase).values())

    def reset(self) -> None:
        with self._lock:
            self.by_phase.clear()

    def snapshot(self) -> dict:
        return {
            "total": self.total(),
            "by_phase": {p: self.total(p) for p in sorted(self.by_phase)},
        }


@dataclass(frozen=True)
class Factorization:
    kind: str
    order: int
    factors: object
    tag: object = None
    counter: SolveCounter | None = None

    def _charge(self, rhs) -> None:
        if self.counter is not None and self.tag is not None:
            self.counter.add(self.tag, 1 if rhs.ndim == 1 else rhs.shape[1])

    def _check(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.order or rhs.ndim > 2:
            raise DimensionError(
                f"rhs of shape {rhs.shape} does not match factorization of order {self.order}"
            )
        return rhs

    def solve(self, rhs) -> np.ndarray:
        rhs = self._check(rhs)
        self._charge(rhs)
        if self.order == 0:
            return rhs.copy()
        if self.kind == "cholesky":
            return sla.cho_solve(self.factors, rhs, check_finite=False)
        return sla.lu_solve(self.factors, rhs, check_finite=False)

    def solve_transpose(self, rhs) -> np.ndarray:
        rhs = self._check(rhs)
        self._charge(rhs)
        if self.order == 0:
            return rhs.copy()
        if self.kind == "cholesky":
            return sla.cho_solve(self.factors, rhs, check_finite=False)
        return sla.lu_solve(self.factors, rhs, trans=1, check_finite=False)


def factorize(M, kind: str = "lu", tag=None, counter: SolveCounter | None = None) -> Factorization:
    """Factor a dense square matrix.

    ``kind`` is ``"lu"`` (partial pivoting, any nonsingular matrix) or
    ``"cholesky"`` (symmetric positive definite).  Raises
    :class:`SingularBlockError` when an LU pivot falls below ``1e-14 * ||M||``
    and :class:`NotPositiveDefiniteError` when Cholesky breaks down.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"matrix must be square, got shape {M.shape}")
    n = M.shape[0]
    if n == 0:
        return Factorization(kind, 0, None, tag, counter)
    if not np.all(np.isfinite(M)):
        raise SingularBlockError(f"non-finite entries in block {tag}", tag)
    scale = np.linalg.norm(M, ord=np.inf)
    if kind == "cholesky":
        try:
            c = sla.cho_factor(M, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(f"matrix {tag} is not positive definite", tag) from exc
        if np.min(np.abs(np.diag(c[0]))) ** 2 <= PIVOT_TOL * scale:
            raise NotPositiveDefiniteError(f"matrix {tag} is numerically semidefinite", tag)
        return Factorization(kind, n, c, tag, counter)
    if kind != "lu":
        raise ValueError(f"unknown factorization kind {kind!r}")
    with warnings.catch_warnings():
        # singularity is judged by the pivot test below
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(M, check_finite=False)
    if scale == 0.0 or np.min(np.abs(np.diag(lu))) <= PIVOT_TOL * scale:
        raise SingularBlockError(f"matrix {tag} is singular to working precision", tag)
    return Factorization(kind, n, (lu, piv), tag, counter)


def solve(fact: Factorization, rhs) -> np.ndarray:
    return fact.solve(rhs)


def solve_transpose(fact: Factorization, rhs) -> np.ndarray:
    return fact.solve_transpose(rhs)
