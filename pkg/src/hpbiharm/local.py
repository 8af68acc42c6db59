"""Physical derivative tables on elements and faces.

Everything here depends only on translation-free geometry (element Jacobian,
reference trace of a face, degrees), so tables are memoised: on dyadic meshes
the number of distinct configurations stays small however large the mesh
grows.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import fem_basis as basis
from .fem_basis import cached_basis, deriv_index
from .mesh import MINUS, PLUS, Mesh, face_trace_map

_CACHE_SIZE = 20000


@dataclass(frozen=True)
class Derivs:
    """Basis values and derivatives at points, in physical coordinates."""

    val: np.ndarray      # (nb, nq)
    grad: np.ndarray     # (nb, nq, 2)
    hess: np.ndarray     # (nb, nq, 2, 2)
    gradlap: np.ndarray  # (nb, nq, 2), gradient of the Laplacian
    bilap: np.ndarray    # (nb, nq)


def _ref_tensor(table, order):
    """Full symmetric derivative tensor of the given order from a multi-index table."""
    shape = table.shape[:2] + (2,) * order
    out = np.empty(shape)
    for idx in np.ndindex(*(2,) * order):
        b = sum(idx)
        out[(Ellipsis,) + idx] = table[:, :, deriv_index(order - b, b)]
    return out


def physical_derivs(kind, p, ref_points, G) -> Derivs:
    """Transform reference tables with ``G = J^{-1}`` (``dxi_i/dx_a = G[i, a]``)."""
    table = cached_basis(kind, p, ref_points, 4)
    grad = np.einsum("bqi,ia->bqa", _ref_tensor(table, 1), G)
    hess = np.einsum("bqij,ia,jc->bqac", _ref_tensor(table, 2), G, G, optimize=True)
    third = np.einsum("bqijk,ia,jc,kd->bqacd", _ref_tensor(table, 3), G, G, G, optimize=True)
    fourth = np.einsum("bqijkl,ia,jc,kd,le->bqacde", _ref_tensor(table, 4), G, G, G, G, optimize=True)
    gradlap = np.einsum("bqaac->bqc", third)
    bilap = np.einsum("bqaacc->bq", fourth)
    return Derivs(table[:, :, 0], grad, hess, gradlap, bilap)


def _jkey(J):
    return tuple(float(v) for v in np.asarray(J).ravel())


@dataclass(frozen=True)
class ElementLocal:
    ref_points: np.ndarray
    weights: np.ndarray  # physical weights (reference weight * |det J|)
    d: Derivs


@lru_cache(maxsize=_CACHE_SIZE)
def _element_local(kind, p, jkey, order):
    J = np.array(jkey).reshape(2, 2)
    rule = basis.quadrature(kind, order)
    G = np.linalg.inv(J)
    return ElementLocal(rule.points, rule.weights * abs(np.linalg.det(J)),
                        physical_derivs(kind, p, rule.points, G))


def element_local(mesh: Mesh, eid: int, order: int) -> ElementLocal:
    _, J = mesh.affine(eid)
    return _element_local(mesh.basis_kind, mesh.degree[eid], _jkey(J), order)


def element_points(mesh: Mesh, eid: int, ref_points) -> np.ndarray:
    x0, J = mesh.affine(eid)
    return x0 + ref_points @ J.T


@dataclass(frozen=True)
class FaceLocal:
    s: np.ndarray        # parameter of quadrature points along the face, in [0, 1]
    weights: np.ndarray  # physical weights
    sides: tuple         # Derivs for plus, and minus (interior faces only)


@lru_cache(maxsize=_CACHE_SIZE)
def _face_local(kind, length, order, side_keys):
    rule = basis.gauss_interval(order)
    sides = []
    for p, jkey, start, end in side_keys:
        J = np.array(jkey).reshape(2, 2)
        a, b = np.array(start), np.array(end)
        ref = a + rule.points[:, None] * (b - a)
        sides.append(physical_derivs(kind, p, ref, np.linalg.inv(J)))
    return FaceLocal(rule.points, rule.weights * length, tuple(sides))


def face_side_keys(mesh: Mesh, face):
    keys = []
    for side, eid in ((PLUS, face.plus), (MINUS, face.minus)):
        if eid is None:
            continue
        tm = face_trace_map(mesh, face, side)
        _, J = mesh.affine(eid)
        keys.append((mesh.degree[eid], _jkey(J), tm.start, tm.end))
    return tuple(keys)


def face_local(mesh: Mesh, face, order: int) -> FaceLocal:
    return _face_local(mesh.basis_kind, float(face.h), order, face_side_keys(mesh, face))


def face_points(mesh: Mesh, face, s) -> np.ndarray:
    a = mesh.coords(face.vertex_ids[0])
    b = mesh.coords(face.vertex_ids[1])
    return a + np.asarray(s)[:, None] * (b - a)


def face_degree(mesh: Mesh, face) -> int:
    """Facewise degree: max of the neighbours on interior faces, p_K on the boundary."""
    if face.minus is None:
        return mesh.degree[face.plus]
    return max(mesh.degree[face.plus], mesh.degree[face.minus])


def clear_caches():
    _element_local.cache_clear()
    _face_local.cache_clear()
