"""Run configurations shared by the command line and the acceptance checks."""

from __future__ import annotations

import io
from dataclasses import dataclass, replace

import numpy as np

from .blocks import BlockFactors, TreeCoupledSystem, matvec, residual
from .direct import compute_arrowhead_schur, solve_direct
from .factor import SolveCounter
from .krylov import SolveReport, gmres
from .precond import Preconditioner, make_preconditioner

__all__ = [
    "RunConfig",
    "PRECOND_NAMES",
    "build_preconditioner",
    "run_gmres",
    "run_direct",
    "csv_history",
    "TABLE_ROWS",
    "cost_table",
    "format_cost_table",
]

PRECOND_NAMES = ("none", "nested-bdiag", "hook", "recursive", "exact", "nonnested-bdiag", "ml")
_CYCLES = {"two": "two_level", "v": "v", "w": "w", "f": "f"}
_HIER = {"top-down": "top_down", "bottom-up": "bottom_up", "even-odd": "even_odd"}


@dataclass(frozen=True)
class RunConfig:
    precond: str = "none"
    method: str = "gmres"
    tol: float = 1e-8
    max_iter: int = 100
    ml_cycle: str = "v"
    ml_hierarchy: str = "top-down"
    ml_smoother: str = "bdiag"
    pre_smooth: int = 0
    post_smooth: int = 1
    ml_cycles: int = 1
    sweeps: int = 1
    nonnested_policy: str = "jacobi"


def build_preconditioner(sys: TreeCoupledSystem, cfg: RunConfig, factors: BlockFactors) -> Preconditioner:
    name = cfg.precond
    if name not in PRECOND_NAMES:
        raise ValueError(f"unknown preconditioner {name!r}")
    if name == "none":
        return make_preconditioner(sys, "identity", factors)
    if name == "nested-bdiag":
        return make_preconditioner(sys, "nested_block_diag", factors)
    if name in ("hook", "recursive", "exact"):
        return make_preconditioner(sys, name, factors)
    if name == "nonnested-bdiag":
        return make_preconditioner(
            sys, "nonnested_triangular", factors, policy=cfg.nonnested_policy,
            sweeps=cfg.sweeps, smoother=cfg.ml_smoother,
        )
    return make_preconditioner(
        sys,
        "nonnested_triangular",
        factors,
        policy="ml",
        cycle=_CYCLES[cfg.ml_cycle],
        hierarchy=_HIER[cfg.ml_hierarchy],
        smoother=cfg.ml_smoother,
        cycles=cfg.ml_cycles,
        pre_smooth=cfg.pre_smooth,
        post_smooth=cfg.post_smooth,
    )


def run_gmres(sys: TreeCoupledSystem, cfg: RunConfig, rhs=None) -> tuple[SolveReport, SolveCounter]:
    counter = SolveCounter()
    factors = BlockFactors(sys, counter)
    P = build_preconditioner(sys, cfg, factors)
    b = sys.rhs() if rhs is None else np.asarray(rhs, dtype=float)
    rep = gmres(lambda v: matvec(sys, v), P, b, tol=cfg.tol, max_iter=cfg.max_iter, counter=counter)
    return rep, counter


def run_direct(sys: TreeCoupledSystem, rhs=None) -> tuple[np.ndarray, float, SolveCounter]:
    """Direct solve; the solve phase is recorded under ``"solve"``."""
    counter = SolveCounter()
    factors = BlockFactors(sys, counter)
    schur = compute_arrowhead_schur(sys, factors)
    b = sys.rhs() if rhs is None else np.asarray(rhs, dtype=float)
    with counter.scope("solve"):
        x = solve_direct(sys, schur, b)
    _, rn = residual(sys, x, b)
    nb = float(np.linalg.norm(b))
    return x, (rn / nb if nb else rn), counter


def csv_history(values) -> str:
    buf = io.StringIO()
    buf.write("iter,rel_residual\n")
    for k, r in enumerate(values):
        buf.write(f"{k},{format(float(r), '.17g')}\n")
    return buf.getvalue()


# rows of the cost table: (group, variant, smoother, RunConfig)
TABLE_ROWS = (
    ("Nested Exact", "", "", RunConfig(precond="exact")),
    ("Nested Recursive", "", "", RunConfig(precond="recursive")),
) + tuple(
    ("ML", label, sm_label, RunConfig(precond="ml", ml_cycle=cyc, ml_hierarchy=hier, ml_smoother=sm))
    for label, cyc, hier in (
        ("V-Cycle", "v", "top-down"),
        ("W-Cycle", "w", "top-down"),
        ("F-Cycle", "f", "top-down"),
        ("Bottom-Up", "v", "bottom-up"),
        ("Even-Odd", "two", "even-odd"),
    )
    for sm_label, sm in (("Block-diagonal", "bdiag"), ("Super-node", "super"))
)


def cost_table(systems: dict, rows=TABLE_ROWS, tol: float = 1e-8, max_iter: int = 100) -> list[dict]:
    """Total B-solve counts (setup plus iteration) per row and system.

    Entries are ``None`` when GMRES does not converge within ``max_iter``.
    """
    out = []
    for group, variant, smoother, cfg in rows:
        cfg = replace(cfg, tol=tol, max_iter=max_iter)
        rec = {"preconditioner": group, "variant": variant, "smoother": smoother, "counts": {}, "iterations": {}}
        for label, sys in systems.items():
            rep, counter = run_gmres(sys, cfg)
            rec["counts"][label] = counter.total() if rep.converged else None
            rec["iterations"][label] = rep.iterations
        out.append(rec)
    return out


def format_cost_table(table: list[dict]) -> str:
    labels = list(table[0]["counts"]) if table else []
    buf = io.StringIO()
    buf.write(",".join(["preconditioner", "variant", "smoother"] + [str(l) for l in labels]) + "\n")
    for rec in table:
        vals = ["" if rec["counts"][l] is None else str(rec["counts"][l]) for l in labels]
        buf.write(",".join([rec["preconditioner"], rec["variant"], rec["smoother"]] + vals) + "\n")
    return buf.getvalue()
