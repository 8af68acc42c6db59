"""Benchmark problems and the adaptive solve-estimate-mark-refine loop."""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .adaptivity import (AdaptDecision, MarkingParams, apply, decision_from_h_marking,
                         initial_predictions, mark_h, mark_hp)
from .dg_system import (DGSolution, DofMap, PenaltyParams, assemble_load, assemble_operator,
                        dg_norm_error)
from .estimator import EstimatorReport, effectivity, estimate
from .linsolve import SolverError, solve_spd
from .mesh import FULL_SPACE, ONE_IRREGULAR, QUAD, Mesh, build_initial
from .problems import (PROBLEMS, BenchmarkProblem, get_problem, lshape_singular, polynomial_xy,
                       square_smooth)

__all__ = [
    "BenchmarkProblem", "PROBLEMS", "get_problem", "lshape_singular", "square_smooth", "polynomial_xy",
    "H", "HP", "Budget", "StepRecord", "RunRecord", "solve_problem", "initial_mesh", "adaptive_driver",
]

log = logging.getLogger(__name__)

H = "h"
HP = "hp"
STRATEGIES = (H, HP)
ETA_FLOOR = 1e-12

CSV_COLUMNS = ["step", "dofs", "error", "eta", "effectivity",
               "eta1", "eta2", "eta3", "eta4", "eta5", "eta6",
               "n_elements", "p_min", "p_max", "seconds", "n_h_refine", "n_p_refine"]
TIMING_COLUMNS = ("seconds",)


@dataclass(frozen=True)
class Budget:
    max_steps: int = 25
    max_dofs: int = 50_000

    def __post_init__(self):
        if self.max_steps < 0 or self.max_dofs <= 0:
            raise ValueError("budget must be positive")


@dataclass
class StepRecord:
    step: int
    dofs: int
    error: float
    eta: float
    effectivity: float
    eta_terms: list  # squared per-term sums
    n_elements: int
    p_min: int
    p_max: int
    seconds: float
    n_h_refine: int = 0
    n_p_refine: int = 0

    def row(self) -> list:
        return [self.step, self.dofs, repr(self.error), repr(self.eta), repr(self.effectivity),
                *[repr(float(v)) for v in self.eta_terms],
                self.n_elements, self.p_min, self.p_max, f"{self.seconds:.6f}",
                self.n_h_refine, self.n_p_refine]


@dataclass
class RunRecord:
    problem: str
    strategy: str
    steps: list = field(default_factory=list)
    failed: bool = False
    message: str = ""

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self.steps])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for s in self.steps:
            w.writerow(s.row())
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"problem": self.problem, "strategy": self.strategy,
                           "failed": self.failed, "message": self.message,
                           "steps": [asdict(s) for s in self.steps]}, indent=2)


@dataclass
class SolveResult:
    solution: DGSolution
    report: EstimatorReport
    error: float


def solve_problem(mesh: Mesh, problem: BenchmarkProblem, params: PenaltyParams = PenaltyParams(),
                  tol: float = 1e-10, with_error: bool = True) -> SolveResult:
    """Assemble, solve, estimate and (optionally) measure the dG error on one mesh."""
    dofmap = DofMap.build(mesh)
    bd = problem.boundary
    A = assemble_operator(mesh, params, dofmap)
    b = assemble_load(mesh, problem.f, bd, params, dofmap)
    sol = DGSolution(mesh, dofmap, solve_spd(A, b, tol).coefficients)
    report = estimate(sol, problem.f, bd, params)
    err = (dg_norm_error(sol, problem.grad, problem.hess, bd, params, problem.singular_point)
           if with_error else float("nan"))
    return SolveResult(sol, report, err)


def initial_mesh(problem: BenchmarkProblem, kind: str = QUAD, n_per_side: int = 2, degree: int = 2,
                 space: str = FULL_SPACE) -> Mesh:
    return build_initial(problem.domain, kind, n_per_side, degree, space)


def adaptive_driver(problem: BenchmarkProblem, strategy: str = H, mesh: Mesh | None = None,
                    marking: MarkingParams = MarkingParams(), penalty: PenaltyParams = PenaltyParams(),
                    budget: Budget = Budget(), closure: str = ONE_IRREGULAR, p_max: int = 10,
                    p_initial: int = 2, on_step: Callable | None = None) -> RunRecord:
    """Run solve -> estimate -> mark -> refine until the budget is spent.

    ``on_step(step, mesh, result, decision)`` is called after every solve
    (``decision`` is None on the final step).  A solver failure stops the
    loop and returns the partial record with ``failed`` set.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}")
    mesh = initial_mesh(problem, degree=p_initial) if mesh is None else mesh
    record = RunRecord(problem.name, strategy)
    predictions = initial_predictions(mesh)
    for step in range(budget.max_steps + 1):
        t0 = time.perf_counter()
        try:
            res = solve_problem(mesh, problem, penalty)
        except SolverError as exc:
            record.failed, record.message = True, f"step {step}: {exc}"
            log.error("solver failure at step %d: %s", step, exc)
            break
        rep = res.report
        ps = [mesh.degree[e] for e in mesh.active_ids()]
        eff = effectivity(rep, res.error) if res.error > 0 else float("nan")
        rec = StepRecord(step, res.solution.dofmap.total_dofs, res.error, rep.eta, eff,
                         rep.term_sums.tolist(), mesh.n_active, min(ps), max(ps), 0.0)
        last = (step == budget.max_steps or rec.dofs > budget.max_dofs or rep.eta < ETA_FLOOR)
        decision: AdaptDecision | None = None
        if not last:
            if strategy == H:
                decision = decision_from_h_marking(mark_h(rep, marking.theta))
            else:
                decision = mark_hp(rep, predictions, marking, p_max)
            rec.n_h_refine, rec.n_p_refine = len(decision.h_refine), len(decision.p_refine)
        if on_step is not None:
            on_step(step, mesh, res, decision)
        if not last:
            mesh, predictions = apply(mesh, decision, closure)
        rec.seconds = time.perf_counter() - t0
        record.steps.append(rec)
        log.info("%s", decision.log_line(step, rec.dofs) if decision else f"step={step} final dofs={rec.dofs}")
        if last:
            break
    return record
