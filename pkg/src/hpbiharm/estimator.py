"""Residual a posteriori error estimator for the dG biharmonic scheme.

Six squared contributions per element::

    eta1 = || (h_K/p_K)^2 (f - lap^2 u_n) ||_K^2
    eta2 = 1/2 sum_{interior F}        (h/p)^3 || [n.grad lap u_n] ||_F^2
    eta3 = 1/2 sum_{interior F}        (h/p)   || [D2u_n n] ||_F^2
    eta4 = 1/2 sum_F  alpha_F          (h/p)   || [D2u_n t] ||_F^2
    eta5 = 1/2 sum_F  alpha_F p tau            || [grad u_n] ||_F^2
    eta6 = 1/2 sum_F  alpha_F sigma            || [u_n] ||_F^2

with ``alpha_F = 2`` on boundary faces and 1 elsewhere.  On boundary faces the
jumps measure the mismatch with the Dirichlet data ``g1``, ``g2``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .dg_system import BoundaryData, DGSolution, PenaltyParams, data_order, penalty_values
from .local import element_local, element_points, face_degree, face_local, face_points

N_TERMS = 6
FACE_EXTRA = 4


@dataclass
class EstimatorReport:
    """Per-element squared indicators, rows aligned with ``ids``."""

    ids: np.ndarray
    levels: np.ndarray
    degrees: np.ndarray
    terms: np.ndarray  # (n_elements, 6), squared contributions eta_{K,j}^2

    @property
    def eta_K2(self) -> np.ndarray:
        return self.terms.sum(axis=1)

    @property
    def eta2(self) -> float:
        return float(self.terms.sum())

    @property
    def eta(self) -> float:
        return float(np.sqrt(self.eta2))

    @property
    def term_sums(self) -> np.ndarray:
        return self.terms.sum(axis=0)

    def as_dict(self) -> dict:
        """Element id -> eta_K^2."""
        return dict(zip(self.ids.tolist(), self.eta_K2.tolist()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "level", "p"] + [f"eta{j}_sq" for j in range(1, N_TERMS + 1)] + ["etaK_sq"])
        for i, lev, p, row, tot in zip(self.ids, self.levels, self.degrees, self.terms, self.eta_K2):
            w.writerow([int(i), int(lev), int(p)] + [repr(float(v)) for v in row] + [repr(float(tot))])
        return buf.getvalue()


def _face_jumps(solution: DGSolution, face, fl, boundary: BoundaryData):
    """Jumps of value, gradient, D2u n, D2u t and n.grad lap u at face quadrature points."""
    mesh = solution.mesh
    n, t = np.asarray(face.normal), np.asarray(face.tangent)

    def traces(eid, d):
        c = solution.local(eid)
        val = c @ d.val
        grad = np.einsum("i,iqa->qa", c, d.grad)
        hess = np.einsum("i,iqab->qab", c, d.hess)
        gl = np.einsum("i,iqa->qa", c, d.gradlap)
        return val, grad, hess, gl

    vp, gp, hp, lp = traces(face.plus, fl.sides[0])
    if face.minus is not None:
        vm, gm, hm, lm = traces(face.minus, fl.sides[1])
        jv = vp - vm
        jg = gp - gm
        jh = hp - hm
        return jv, jg, jh @ n, jh @ t, (lp - lm) @ n
    x = face_points(mesh, face, fl.s)
    jv = vp - boundary.g1(x, n, t)
    jg = (np.outer(gp @ n - boundary.g2(x, n, t), n)
          + np.outer(gp @ t - boundary.dt_g1(x, n, t), t))
    ht = hp @ t
    jht = (np.outer(ht @ t - boundary.dtt_g1(x, n, t), t)
           + np.outer(ht @ n - boundary.dt_g2(x, n, t), n))
    return jv, jg, None, jht, None


def estimate(solution: DGSolution, f, boundary: BoundaryData | None = None,
             params: PenaltyParams = PenaltyParams()) -> EstimatorReport:
    """Evaluate all six indicator contributions on every active element."""
    mesh = solution.mesh
    boundary = BoundaryData.homogeneous() if boundary is None else boundary
    ids = solution.dofmap.element_ids
    row = {eid: k for k, eid in enumerate(ids)}
    terms = np.zeros((len(ids), N_TERMS))

    for k, eid in enumerate(ids):
        p = mesh.degree[eid]
        el = element_local(mesh, eid, data_order(p))
        fx = np.asarray(f(element_points(mesh, eid, el.ref_points)), dtype=float)
        r = fx - solution.local(eid) @ el.d.bilap
        hK = mesh.elements[eid].h
        terms[k, 0] = (hK / p) ** 4 * float(r**2 @ el.weights)

    for face in mesh.faces:
        pF = face_degree(mesh, face)
        sigma, tau = penalty_values(pF, face.h, params)
        hp_ = face.h / pF
        fl = face_local(mesh, face, 2 * pF + FACE_EXTRA)
        w = fl.weights
        jv, jg, jhn, jht, jgl = _face_jumps(solution, face, fl, boundary)
        contrib = np.zeros(N_TERMS)
        if face.minus is not None:
            contrib[1] = hp_**3 * float(jgl**2 @ w)
            contrib[2] = hp_ * float(np.einsum("qa,qa,q->", jhn, jhn, w))
        contrib[3] = hp_ * float(np.einsum("qa,qa,q->", jht, jht, w))
        contrib[4] = pF * tau * float(np.einsum("qa,qa,q->", jg, jg, w))
        contrib[5] = sigma * float(jv**2 @ w)
        if face.minus is None:
            terms[row[face.plus]] += contrib  # 1/2 * alpha_F with alpha_F = 2
        else:
            terms[row[face.plus]] += 0.5 * contrib
            terms[row[face.minus]] += 0.5 * contrib

    levels = np.array([mesh.elements[e].level for e in ids], dtype=int)
    degrees = np.array([mesh.degree[e] for e in ids], dtype=int)
    return EstimatorReport(np.array(ids, dtype=int), levels, degrees, terms)


def effectivity(report: EstimatorReport | float, dg_error: float) -> float:
    """Effectivity index ``eta / ||u - u_n||_dG``."""
    if not dg_error > 0:
        raise ValueError("effectivity needs a strictly positive dG error")
    eta = report.eta if isinstance(report, EstimatorReport) else float(report)
    return eta / dg_error
