"""Solvers and preconditioners for saddle-point systems coupled along a directed tree."""

from .blocks import (
    BlockFactors,
    TreeCoupledSystem,
    assemble_global,
    check_assumptions,
    make_system,
    matvec,
    nested_permutation,
    residual,
)
from .direct import NestedSchurSet, compute_arrowhead_schur, solve_direct
from .errors import (
    DimensionError,
    NotPositiveDefiniteError,
    PreconditionerNotApplicable,
    SingularBlockError,
    TreeSaddleError,
    TreeStructureError,
    ValidationError,
)
from .factor import SolveCounter, factorize
from .krylov import SolveReport, gmres
from .multilevel import build_hierarchy, cycle_apply, iteration_matrix_norms
from .precond import Preconditioner, make_preconditioner, recursive_fixed_point
from .problems import (
    ScenarioQPConfig,
    ShootingConfig,
    gen_multiple_shooting,
    gen_random_system,
    gen_scenario_qp,
)
from .schur import assemble_vertex_schur, block_diagonal_smoother, block_jacobi, build_supernode_smoother
from .tree import DirectedTree, build_tree, level_family, subtree_vertices, vertex_metrics

__version__ = "0.1.0"
