"""Goal-oriented adaptivity for residual minimization on dual dG norms."""
from .adaptivity import (
    ConvergenceHistory,
    ConvergenceRecord,
    MarkSet,
    dorfler_mark,
    optimal_slope,
    rate_fit,
    read_csv,
    run_adaptive,
)
from .assembly import ProblemDef, assemble_bh, assemble_gram, assemble_lh, assemble_qoi
from .estimators import EstimatorKind, IndicatorField, element_indicators
from .fem_basis import build_space, embedding_matrix
from .linear_solve import SaddleSystem, SingularSystemError, solve_adjoint, solve_primal
from .mesh import Mesh, bisect, build_cross_mesh, build_square_mesh, skeleton
from .problems import catalog

__all__ = [
    "ConvergenceHistory", "ConvergenceRecord", "EstimatorKind", "IndicatorField", "MarkSet",
    "Mesh", "ProblemDef", "SaddleSystem", "SingularSystemError", "assemble_bh", "assemble_gram",
    "assemble_lh", "assemble_qoi", "bisect", "build_cross_mesh", "build_space",
    "build_square_mesh", "catalog", "dorfler_mark", "element_indicators", "embedding_matrix",
    "optimal_slope", "rate_fit", "read_csv", "run_adaptive", "skeleton", "solve_adjoint",
    "solve_primal",
]
