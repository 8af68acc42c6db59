"""Marking strategies and the refinement step.

``mark_h`` is the maximum strategy on squared indicators.  ``mark_hp``
follows the predicted-indicator algorithm: an element whose computed
indicator exceeds its prediction is h-refined (the smoothness assumption
failed), otherwise its degree is raised and it is offered for coarsening.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .estimator import EstimatorReport
from .mesh import ONE_IRREGULAR, Mesh, coarsen, refine, smooth_degrees

log = logging.getLogger(__name__)

MIN_DEGREE = 2
CHILDREN_2D = 4
# indicators within this relative distance of a threshold count as reaching it,
# so that mirror-image elements (equal up to rounding) are marked together
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class MarkingParams:
    theta: float = 0.5
    sigma_mark: float = 0.7
    gamma_h: float = 3.0
    gamma_p: float = 0.9

    def __post_init__(self):
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if not 0 < self.sigma_mark <= 1:
            raise ValueError("sigma_mark must lie in (0, 1]")
        if not self.gamma_h > 0:
            raise ValueError("gamma_h must be positive")
        if not 0 < self.gamma_p < 1:
            raise ValueError("gamma_p must lie in (0, 1)")


@dataclass
class AdaptDecision:
    """Outcome of marking.

    ``new_predictions`` is keyed by current element ids.  For h-refined
    elements the value is the prediction each child receives; :func:`apply`
    moves it onto the children.  ``lower_child_degree`` selects the hp rule
    (children one degree lower, floor 2); pure h-adaptivity keeps degrees.
    """

    h_refine: set = field(default_factory=set)
    p_refine: set = field(default_factory=set)
    h_coarsen: set = field(default_factory=set)
    new_predictions: dict = field(default_factory=dict)
    lower_child_degree: bool = True

    def __post_init__(self):
        if self.h_refine & self.p_refine:
            raise ValueError("an element cannot be both h- and p-refined")

    def log_line(self, step: int, dofs: int) -> str:
        return (f"step={step} h_refine={len(self.h_refine)} p_refine={len(self.p_refine)} "
                f"coarsen={len(self.h_coarsen)} dofs={dofs}")


def _selected(values: np.ndarray, fraction: float) -> np.ndarray:
    top = values.max()
    return values >= fraction * top * (1.0 - TIE_RTOL)


def mark_h(report: EstimatorReport, theta: float = 0.5) -> set:
    """Maximum strategy: ``eta_K^2 >= theta * max eta_K^2``."""
    if len(report.ids) == 0:
        raise ValueError("empty estimator report")
    sel = _selected(report.eta_K2, theta)
    return set(report.ids[sel].tolist())


def initial_predictions(mesh: Mesh) -> dict:
    return {eid: math.inf for eid in mesh.active_ids()}


def mark_hp(report: EstimatorReport, predicted: dict, params: MarkingParams = MarkingParams(),
            p_max: int = 10) -> AdaptDecision:
    if p_max < MIN_DEGREE:
        raise ValueError(f"p_max must be >= {MIN_DEGREE}")
    missing = [e for e in report.ids.tolist() if e not in predicted]
    if missing:
        raise ValueError(f"no prediction for elements {missing[:5]}")
    eta2 = report.eta_K2
    sel = _selected(eta2, params.sigma_mark)
    dec = AdaptDecision()
    for eid, p, e2, chosen in zip(report.ids.tolist(), report.degrees.tolist(), eta2, sel):
        pred = predicted[eid]
        if not chosen:
            dec.new_predictions[eid] = pred
        elif e2 >= pred or p >= p_max:
            dec.h_refine.add(eid)
            dec.new_predictions[eid] = params.gamma_h / CHILDREN_2D * 0.5 ** (2 * p - 2) * float(e2)
        else:
            dec.p_refine.add(eid)
            dec.h_coarsen.add(eid)
            dec.new_predictions[eid] = params.gamma_p * float(e2)
    return dec


def decision_from_h_marking(marked) -> AdaptDecision:
    return AdaptDecision(h_refine=set(marked), lower_child_degree=False)


def apply(mesh: Mesh, decision: AdaptDecision, closure: str = ONE_IRREGULAR):
    """Execute a decision; returns ``(new_mesh, predictions)`` for the new active set.

    Order: degrees of h-refined elements drop by one (floor 2) and are passed to
    the children, p-refined elements gain a degree, the mesh is refined with the
    requested closure, p-refined families are coarsened where possible, and
    finally degrees are smoothed so neighbours differ by at most one.
    """
    work = mesh.copy()
    for eid in decision.h_refine if decision.lower_child_degree else ():
        # children inherit this degree when the element is split; a green
        # element passes it to its red parent when the greens are removed
        work.degree[eid] = max(mesh.degree[eid] - 1, MIN_DEGREE)
    for eid in decision.p_refine:
        work.degree[eid] = mesh.degree[eid] + 1
    out = refine(work, decision.h_refine, closure) if decision.h_refine else work
    if decision.h_coarsen:
        out = coarsen(out, [e for e in decision.h_coarsen if out.elements[e].active])
    smooth_degrees(out)
    return out, _rekey(mesh, out, decision)


def _rekey(old: Mesh, new: Mesh, decision: AdaptDecision) -> dict:
    old_active = set(old.active_ids())
    preds = decision.new_predictions
    child_pred = {}
    for pid in decision.h_refine:
        el = new.elements[pid]
        target = el.parent if el.green else pid
        for k in new.elements[target].children or ():
            child_pred[k] = preds.get(pid, math.inf)
    out = {}
    for eid in new.active_ids():
        if eid in old_active:
            out[eid] = preds.get(eid, math.inf)
        elif eid in child_pred:
            out[eid] = child_pred[eid]
        else:
            kids = new.elements[eid].children or ()
            if kids and all(k in old_active for k in kids):
                out[eid] = max(preds.get(k, math.inf) for k in kids)
            else:
                out[eid] = math.inf
    return out
