"""Interior penalty dG discretisation of the biharmonic problem (Hessian form).

The lifting terms of the bilinear form are assembled through their expanded
face integrals::

    B(u, v) = sum_K (D2u, D2v)_K
            + sum_F ( {n.grad lap v}[u] + {n.grad lap u}[v]
                      - {D2v n}.[grad u] - {D2u n}.[grad v]
                      + sigma [u][v] + tau [grad u].[grad v] )

with ``sigma = c_sigma p_F^6 / h_F^3`` and ``tau = c_tau p_F^2 / h_F``.  On
boundary faces averages and jumps are one-sided traces.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .fem_basis import dof_count
from .local import (_face_local, element_local, element_points, face_degree, face_local,
                    face_points, face_side_keys)
from .mesh import Mesh, MeshError

STIFFNESS_EXTRA = 2
DATA_EXTRA = 6
SINGULAR_LEVELS = 8


@dataclass(frozen=True)
class PenaltyParams:
    c_sigma: float = 10.0
    c_tau: float = 10.0

    def __post_init__(self):
        if not (self.c_sigma > 0 and self.c_tau > 0):
            raise ValueError("penalty constants must be positive")


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet data ``u = g1`` and ``n.grad u = g2`` on straight boundary faces.

    Every callable takes ``(points, normal, tangent)`` with ``points`` of shape
    ``(n, 2)``.  Besides the traces themselves the estimator and the load need
    the tangential derivatives ``dt_g1``, ``dtt_g1`` and ``dt_g2``.
    """

    g1: Callable
    g2: Callable
    dt_g1: Callable
    dtt_g1: Callable
    dt_g2: Callable

    @classmethod
    def homogeneous(cls) -> "BoundaryData":
        zero = lambda x, n, t: np.zeros(len(x))  # noqa: E731
        return cls(zero, zero, zero, zero, zero)

    @classmethod
    def from_exact(cls, u, grad, hess) -> "BoundaryData":
        """Traces of a known smooth solution (derivatives along straight faces)."""
        return cls(
            g1=lambda x, n, t: u(x),
            g2=lambda x, n, t: grad(x) @ n,
            dt_g1=lambda x, n, t: grad(x) @ t,
            dtt_g1=lambda x, n, t: np.einsum("qab,a,b->q", hess(x), t, t),
            dt_g2=lambda x, n, t: np.einsum("qab,a,b->q", hess(x), n, t),
        )


@dataclass
class DofMap:
    element_ids: list
    offsets: dict
    counts: dict
    total_dofs: int

    @classmethod
    def build(cls, mesh: Mesh) -> "DofMap":
        ids = mesh.active_ids()
        offsets, counts, n = {}, {}, 0
        for eid in ids:
            c = dof_count(mesh.basis_kind, mesh.degree[eid])
            offsets[eid], counts[eid] = n, c
            n += c
        return cls(ids, offsets, counts, n)

    def dofs(self, eid) -> np.ndarray:
        o = self.offsets[eid]
        return np.arange(o, o + self.counts[eid])


@dataclass
class DGSolution:
    mesh: Mesh
    dofmap: DofMap
    coeffs: np.ndarray

    def local(self, eid) -> np.ndarray:
        o = self.dofmap.offsets[eid]
        return self.coeffs[o:o + self.dofmap.counts[eid]]

    def evaluate(self, eid, ref_points) -> np.ndarray:
        from .fem_basis import eval_basis
        v = eval_basis(self.mesh.basis_kind, self.mesh.degree[eid], ref_points)[:, :, 0]
        return self.local(eid) @ v


def penalty_values(p_F: int, h_F: float, params: PenaltyParams):
    return params.c_sigma * p_F**6 / h_F**3, params.c_tau * p_F**2 / h_F


def penalty_on_face(mesh: Mesh, face, params: PenaltyParams):
    """``(sigma, tau)`` on a face, with the facewise degree and diameter."""
    return penalty_values(face_degree(mesh, face), face.h, params)


def stiffness_order(p: int) -> int:
    return 2 * p + STIFFNESS_EXTRA


def data_order(p: int) -> int:
    return 2 * p + DATA_EXTRA


# {{{ local matrices

@lru_cache(maxsize=20000)
def _element_matrix(kind, p, jkey, order):
    from .local import _element_local
    el = _element_local(kind, p, jkey, order)
    h = el.d.hess
    K = np.einsum("iqab,jqab,q->ij", h, h, el.weights, optimize=True)
    return 0.5 * (K + K.T)


def _side_operators(d, n, chi, avg):
    jump0 = chi * d.val
    jump1 = chi * d.grad
    avg3 = avg * (d.gradlap @ n)
    avg2 = avg * (d.hess @ n)
    return jump0, jump1, avg3, avg2


@lru_cache(maxsize=20000)
def _face_matrix(kind, length, order, side_keys, normal, sigma, tau):
    fl = _face_local(kind, length, order, side_keys)
    n = np.array(normal)
    interior = len(fl.sides) == 2
    avg = 0.5 if interior else 1.0
    ops = [_side_operators(d, n, chi, avg) for d, chi in zip(fl.sides, (1.0, -1.0))]
    j0, j1, a3, a2 = (np.concatenate(parts, axis=0) for parts in zip(*ops))
    w = fl.weights
    sym = (a3 * w) @ j0.T - np.einsum("iqa,jqa,q->ij", a2, j1, w)
    pen = sigma * (j0 * w) @ j0.T + tau * np.einsum("iqa,jqa,q->ij", j1, j1, w)
    return sym + sym.T + 0.5 * (pen + pen.T)


def _face_dofs(dofmap, face):
    d = dofmap.dofs(face.plus)
    if face.minus is None:
        return d
    return np.concatenate([d, dofmap.dofs(face.minus)])


def assemble_operator(mesh: Mesh, params: PenaltyParams = PenaltyParams(), dofmap: DofMap | None = None):
    """Sparse symmetric dG operator in CSR format."""
    dofmap = DofMap.build(mesh) if dofmap is None else dofmap
    rows, cols, vals = [], [], []

    def add(idx, block):
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append(block.ravel())

    for eid in dofmap.element_ids:
        _, J = mesh.affine(eid)
        if abs(np.linalg.det(J)) < 1e-300:
            raise MeshError(f"degenerate element {eid}")
        p = mesh.degree[eid]
        add(dofmap.dofs(eid), _element_matrix(mesh.basis_kind, p, tuple(J.ravel()), stiffness_order(p)))
    for f in mesh.faces:
        pF = face_degree(mesh, f)
        sigma, tau = penalty_values(pF, f.h, params)
        block = _face_matrix(mesh.basis_kind, float(f.h), stiffness_order(pF), face_side_keys(mesh, f),
                             tuple(f.normal), sigma, tau)
        add(_face_dofs(dofmap, f), block)
    n = dofmap.total_dofs
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return A.tocsr()


def assemble_load(mesh: Mesh, f, boundary: BoundaryData | None = None,
                  params: PenaltyParams = PenaltyParams(), dofmap: DofMap | None = None) -> np.ndarray:
    """Right-hand side ``(f, v) + boundary terms carrying g1, g2``."""
    dofmap = DofMap.build(mesh) if dofmap is None else dofmap
    b = np.zeros(dofmap.total_dofs)
    for eid in dofmap.element_ids:
        el = element_local(mesh, eid, data_order(mesh.degree[eid]))
        fx = np.asarray(f(element_points(mesh, eid, el.ref_points)), dtype=float)
        b[dofmap.dofs(eid)] += el.d.val @ (fx * el.weights)
    if boundary is None:
        return b
    for face in mesh.faces:
        if face.minus is not None:
            continue
        pF = face_degree(mesh, face)
        sigma, tau = penalty_values(pF, face.h, params)
        fl = face_local(mesh, face, data_order(pF))
        d = fl.sides[0]
        x = face_points(mesh, face, fl.s)
        n, t = face.normal, face.tangent
        g1 = boundary.g1(x, n, t)
        G = np.outer(boundary.g2(x, n, t), n) + np.outer(boundary.dt_g1(x, n, t), t)
        term = g1 * (sigma * d.val + d.gradlap @ n) + np.einsum("qa,iqa->iq", G, tau * d.grad - d.hess @ n)
        b[dofmap.dofs(face.plus)] += term @ fl.weights
    return b


# {{{ error in the dG norm

@lru_cache(maxsize=None)
def graded_rule(kind: str, corner: int, order: int, levels: int = SINGULAR_LEVELS):
    """Composite reference rule refined dyadically towards one reference vertex."""
    from .fem_basis import quadrature, reference_vertices
    base = quadrature(kind, order)
    verts = reference_vertices(kind)
    c = verts[corner]
    pts, wts = [], []
    # each level: the cell touching the corner is halved towards it; the rest is integrated directly
    for lev in range(levels):
        s = 0.5**lev
        # cell = c + s * (ref - c); split into four children, keep the non-corner ones
        for child_pts, child_w in _children_rules(kind, base, corner):
            pts.append(c + s * (child_pts - c))
            wts.append(child_w * s * s)
    s = 0.5**levels
    pts.append(c + s * (base.points - c))
    wts.append(base.weights * s * s)
    return np.concatenate(pts), np.concatenate(wts)


def _children_rules(kind, base, corner):
    from .fem_basis import QUAD, reference_vertices
    verts = reference_vertices(kind)
    if kind == QUAD:
        out = []
        for k in range(4):
            if k == corner:
                continue
            # the child square touching vertex k
            o = 0.5 * verts[k]
            out.append((o + 0.5 * base.points, base.weights * 0.25))
        return out
    m = [(verts[i] + verts[(i + 1) % 3]) / 2 for i in range(3)]
    cells = [(verts[0], m[0], m[2]), (m[0], verts[1], m[1]), (m[2], m[1], verts[2]), (m[1], m[2], m[0])]
    out = []
    for k, (a, b, c) in enumerate(cells):
        if k == corner:
            continue
        J = np.column_stack([b - a, c - a])
        out.append((a + base.points @ J.T, base.weights * abs(np.linalg.det(J)) / 1.0))
    return out


def _singular_corner(mesh, eid, point):
    if point is None:
        return None
    xs = mesh.element_vertices(eid)
    hit = np.flatnonzero(np.all(np.abs(xs - np.asarray(point)) < 1e-14, axis=1))
    if len(hit) == 0:
        return None
    k = int(hit[0])
    # reference vertex index for the quad map (0,0),(1,0),(1,1),(0,1) matches ccw order
    return k


def dg_norm_error(solution: DGSolution, exact_grad, exact_hess, boundary: BoundaryData,
                  params: PenaltyParams = PenaltyParams(), singular_point=None,
                  split: bool = False):
    """dG-norm of ``u - u_n``.

    ``exact_grad``/``exact_hess`` enter only through the broken Hessian term
    (``exact_grad`` is kept for interface symmetry); face terms use the jumps
    of ``u_n`` on interior faces and the boundary data on boundary faces.
    Elements touching ``singular_point`` use a quadrature graded towards it.
    With ``split=True`` the squared contributions (hessian, tau, sigma) are
    returned instead of the norm.
    """
    mesh = solution.mesh
    from .local import physical_derivs
    e_h = e_tau = e_sigma = 0.0
    for eid in solution.dofmap.element_ids:
        p = mesh.degree[eid]
        corner = _singular_corner(mesh, eid, singular_point)
        c = solution.local(eid)
        if corner is None:
            el = element_local(mesh, eid, data_order(p))
            ref, w, hess = el.ref_points, el.weights, el.d.hess
        else:
            x0, J = mesh.affine(eid)
            ref, w = graded_rule(mesh.kind, corner, data_order(p))
            w = w * abs(np.linalg.det(J))
            hess = physical_derivs(mesh.basis_kind, p, ref, np.linalg.inv(J)).hess
        x = element_points(mesh, eid, ref)
        diff = exact_hess(x) - np.einsum("i,iqab->qab", c, hess)
        e_h += float(np.einsum("qab,qab,q->", diff, diff, w))
    for face in mesh.faces:
        pF = face_degree(mesh, face)
        sigma, tau = penalty_values(pF, face.h, params)
        fl = face_local(mesh, face, data_order(pF))
        n, t = face.normal, face.tangent
        dp = fl.sides[0]
        cp = solution.local(face.plus)
        val = cp @ dp.val
        grad = np.einsum("i,iqa->qa", cp, dp.grad)
        if face.minus is None:
            x = face_points(mesh, face, fl.s)
            jv = boundary.g1(x, n, t) - val
            jg = (np.outer(boundary.g2(x, n, t), n) + np.outer(boundary.dt_g1(x, n, t), t)) - grad
        else:
            dm = fl.sides[1]
            cm = solution.local(face.minus)
            jv = val - cm @ dm.val
            jg = grad - np.einsum("i,iqa->qa", cm, dm.grad)
        e_sigma += sigma * float(jv**2 @ fl.weights)
        e_tau += tau * float(np.einsum("qa,qa,q->", jg, jg, fl.weights))
    if split:
        return e_h, e_tau, e_sigma
    return float(np.sqrt(e_h + e_tau + e_sigma))
