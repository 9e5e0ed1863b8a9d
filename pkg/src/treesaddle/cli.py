"""Command line: ``treesaddle {generate,solve,spectrum,count}``.

Exit codes: 0 success, 1 I/O failure, 2 no convergence, 3 invalid input,
4 preconditioner not applicable to the problem.
"""

from __future__ import annotations

import argparse
import json
import sys as _sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import fileio
from .blocks import BlockFactors, assemble_global
from .errors import PreconditionerNotApplicable, TreeSaddleError
from .experiments import (
    PRECOND_NAMES,
    RunConfig,
    build_preconditioner,
    cost_table,
    csv_history,
    format_cost_table,
    run_direct,
    run_gmres,
)
from .factor import SolveCounter
from .multilevel import build_hierarchy, cycle_matrix
from .problems import ScenarioQPConfig, ShootingConfig, gen_multiple_shooting, gen_random_system, gen_scenario_qp
from .schur import assemble_vertex_schur, block_diagonal_smoother
from .tree import branching_tree, level_family, path_tree, star_tree

EXIT_OK, EXIT_IO, EXIT_NOCONV, EXIT_INVALID, EXIT_INAPPLICABLE = 0, 1, 2, 3, 4
SPECTRUM_MAX_ORDER = 400


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()] if text else []


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--precond", choices=PRECOND_NAMES, default="none")
    p.add_argument("--ml-cycle", choices=("two", "v", "w", "f"), default="v")
    p.add_argument("--ml-hierarchy", choices=("top-down", "bottom-up", "even-odd"), default="top-down")
    p.add_argument("--ml-smoother", choices=("bdiag", "super"), default="bdiag")
    p.add_argument("--pre-smooth", type=int, default=0)
    p.add_argument("--post-smooth", type=int, default=1)
    p.add_argument("--ml-cycles", type=int, default=1, help="cycles per application")
    p.add_argument("--sweeps", type=int, default=1, help="Jacobi sweeps for nonnested-bdiag")
    p.add_argument("--nonnested-policy", choices=("jacobi", "exact"), default="jacobi")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=100)


def _run_config(a) -> RunConfig:
    names = {f.name for f in fields(RunConfig)}
    return RunConfig(**{k: v for k, v in vars(a).items() if k in names})


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="treesaddle", description="Tree-coupled saddle-point solvers.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a problem file")
    g.add_argument("kind", choices=("random", "scenario", "shooting"))
    g.add_argument("--out", required=True, help="output path (.json or .json.gz)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--tree", choices=("path", "star", "branching"), default="branching",
                   help="random: tree shape")
    g.add_argument("--vertices", type=int, default=7, help="random: vertex count for path/star")
    g.add_argument("--branching", default=None, help="children per level, e.g. 2,2,1")
    g.add_argument("--depth", type=int, default=None, help="scenario: path depth when --branching is absent")
    g.add_argument("--n-min", type=int, default=2)
    g.add_argument("--n-max", type=int, default=6)
    g.add_argument("--l-min", type=int, default=1)
    g.add_argument("--l-max", type=int, default=2)
    g.add_argument("--style", default=None, help="random: spd|kkt; scenario: kkt|homotopy")
    g.add_argument("--d-style", choices=("zero", "identity", "psd", "pd"), default="psd")
    g.add_argument("--n-state", type=int, default=2)
    g.add_argument("--n-control", type=int, default=1)
    g.add_argument("--n-constraint", type=int, default=0)
    g.add_argument("--n-couple", type=int, default=None)
    g.add_argument("--lam", type=float, default=1e-2)
    g.add_argument("--delta", type=float, default=1e-2)
    g.add_argument("--intervals", type=int, default=8)
    g.add_argument("--steps", type=int, default=40)
    g.add_argument("--shape", choices=("shallow", "binary", "path"), default="shallow")

    s = sub.add_parser("solve", help="solve a problem file")
    s.add_argument("problem")
    s.add_argument("--method", choices=("gmres", "direct"), default="gmres")
    _add_run_flags(s)
    s.add_argument("--seed", type=int, default=0, help="unused by deterministic solvers; recorded")
    s.add_argument("--csv", default="-", help="residual history path ('-' for stdout)")
    s.add_argument("--summary", default=None, help="JSON summary path (default: stderr)")

    sp = sub.add_parser("spectrum", help="eigenvalues of a small operator")
    sp.add_argument("problem")
    sp.add_argument("--operator", choices=("jacobi", "cycle", "precond"), default="jacobi",
                    help="jacobi: I - S_diag^-1 S; cycle: I - Psi S; precond: A P^-T")
    _add_run_flags(sp)
    sp.add_argument("--out", default="-")

    c = sub.add_parser("count", help="B-solve cost table over several problems")
    c.add_argument("problems", nargs="+")
    c.add_argument("--tol", type=float, default=1e-8)
    c.add_argument("--max-iter", type=int, default=100)
    c.add_argument("--out", default="-")
    return ap


def _write(path: str, text: str) -> None:
    if path == "-":
        _sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _cmd_generate(a) -> int:
    if a.kind == "random":
        if a.tree == "path":
            tree = path_tree(a.vertices)
        elif a.tree == "star":
            tree = star_tree(a.vertices - 1)
        else:
            tree = branching_tree(_int_list(a.branching or "2,2"))
        sysm = gen_random_system(
            tree, (a.n_min, a.n_max), (a.l_min, a.l_max), seed=a.seed,
            style=a.style or "spd", d_style=a.d_style,
        )
        meta = {"generator": "random", "seed": a.seed, "style": a.style or "spd", "d_style": a.d_style}
    elif a.kind == "scenario":
        if a.branching is not None:
            sched = _int_list(a.branching)
        else:
            sched = [2] + [1] * ((a.depth or 3) - 1)
        cfg = ScenarioQPConfig(
            branching=tuple(sched), n_state=a.n_state, n_control=a.n_control,
            n_constraint=a.n_constraint, n_couple=a.n_couple, style=a.style or "kkt",
            lam=a.lam, delta=a.delta, seed=a.seed,
        )
        sysm = gen_scenario_qp(cfg)
        meta = cfg.to_meta()
    else:
        cfg = ShootingConfig(intervals=a.intervals, steps=a.steps, tree=a.shape)
        sysm = gen_multiple_shooting(cfg)
        meta = cfg.to_meta()
    fileio.save(a.out, sysm, meta)
    return EXIT_OK


def _cmd_solve(a) -> int:
    sysm, _ = fileio.load(a.problem)
    cfg = _run_config(a)
    if a.method == "direct":
        _, rel, counter = run_direct(sysm)
        hist = [1.0, rel]
        per_vertex = counter.counts("solve")
        summary = {
            "method": "direct",
            "iterations": 1,
            "converged": bool(rel <= cfg.tol),
            "true_relative_residual": rel,
            "solve_counts": {
                "setup": counter.total("setup"),
                "solve": counter.total("solve"),
                "total": counter.total(),
            },
            "per_vertex_solve_counts": {str(v): per_vertex[v] for v in sorted(k for k in per_vertex if isinstance(k, int))},
        }
    else:
        rep, counter = run_gmres(sysm, cfg)
        hist = rep.relative_residuals
        summary = {"method": "gmres", "precond": cfg.precond, **rep.summary()}
    _write(a.csv, csv_history(hist))
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if a.summary:
        _write(a.summary, text)
    else:
        _sys.stderr.write(text)
    return EXIT_OK if summary["converged"] else EXIT_NOCONV


def _cmd_spectrum(a) -> int:
    sysm, _ = fileio.load(a.problem)
    cfg = _run_config(a)
    if a.operator == "precond":
        n = sysm.order
        if n > SPECTRUM_MAX_ORDER:
            raise _SizeGuard(n)
        factors = BlockFactors(sysm, SolveCounter())
        P = build_preconditioner(sysm, cfg, factors)
        A = assemble_global(sysm).toarray()
        M = A @ P.dense(transpose=True)
    else:
        S = assemble_vertex_schur(sysm)
        n = S.n_f
        if n > SPECTRUM_MAX_ORDER:
            raise _SizeGuard(n)
        Sd = S.dense()
        if a.operator == "jacobi":
            G = block_diagonal_smoother(S).dense(n)
            M = np.eye(n) - G @ Sd
        else:
            from .experiments import _CYCLES, _HIER

            fam = level_family(sysm.tree, _HIER[cfg.ml_hierarchy])
            cyc = _CYCLES[cfg.ml_cycle]
            H = build_hierarchy(S, fam, cfg.ml_smoother, cfg.pre_smooth, cfg.post_smooth,
                                two_level=(cyc == "two_level"))
            M = np.eye(n) - cycle_matrix(H, cyc, max_order=SPECTRUM_MAX_ORDER) @ Sd
    eig = np.linalg.eigvals(M) if n else np.zeros(0)
    eig = sorted(eig, key=lambda z: (round(z.real, 12), round(z.imag, 12)))
    lines = ["index,real,imag"] + [
        f"{i},{format(float(z.real), '.17g')},{format(float(z.imag), '.17g')}" for i, z in enumerate(eig)
    ]
    _write(a.out, "\n".join(lines) + "\n")
    return EXIT_OK


def _cmd_count(a) -> int:
    systems = {}
    for path in a.problems:
        sysm, meta = fileio.load(path)
        label = str(meta.get("label") or Path(path).name.split(".")[0])
        systems[label] = sysm
    table = cost_table(systems, tol=a.tol, max_iter=a.max_iter)
    _write(a.out, format_cost_table(table))
    return EXIT_OK


class _SizeGuard(TreeSaddleError):
    def __init__(self, n):
        super().__init__(f"operator order {n} exceeds the dense limit {SPECTRUM_MAX_ORDER}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {
        "generate": _cmd_generate,
        "solve": _cmd_solve,
        "spectrum": _cmd_spectrum,
        "count": _cmd_count,
    }[args.command]
    try:
        return handler(args)
    except PreconditionerNotApplicable as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_INAPPLICABLE
    except (TreeSaddleError, ValueError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
