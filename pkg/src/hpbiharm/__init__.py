"""hp-adaptive interior penalty dG solver for the clamped biharmonic problem in 2D."""
from .adaptivity import AdaptDecision, MarkingParams, apply, mark_h, mark_hp
from .benchmarks import (Budget, RunRecord, adaptive_driver, get_problem, lshape_singular,
                         solve_problem, square_smooth)
from .dg_system import (BoundaryData, DGSolution, DofMap, PenaltyParams, assemble_load,
                        assemble_operator, dg_norm_error)
from .estimator import EstimatorReport, effectivity, estimate
from .linsolve import SolverError, SolveReport, solve_spd
from .mesh import Mesh, build_initial, coarsen, refine

__version__ = "0.1.0"

__all__ = [
    "AdaptDecision", "MarkingParams", "apply", "mark_h", "mark_hp",
    "Budget", "RunRecord", "adaptive_driver", "get_problem", "lshape_singular", "solve_problem",
    "square_smooth", "BoundaryData", "DGSolution", "DofMap", "PenaltyParams", "assemble_load",
    "assemble_operator", "dg_norm_error", "EstimatorReport", "effectivity", "estimate",
    "SolverError", "SolveReport", "solve_spd", "Mesh", "build_initial", "coarsen", "refine",
]
