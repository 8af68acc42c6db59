"""Modal reference bases and quadrature rules.

Reference elements are the unit square ``[0,1]^2`` and the triangle with
vertices ``(0,0), (1,0), (0,1)``.  Quadrilaterals carry a tensor product of
shifted Legendre polynomials, triangles carry the Dubiner (collapsed
Jacobi) basis.  Both are orthonormal in ``L^2`` of the reference element and
ordered hierarchically by degree.

Derivative tables are indexed by multi-index ``(a, b)`` meaning
``d^a/dx^a d^b/dy^b``, in the order returned by :func:`multi_indices`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from numpy.polynomial import legendre as leg
from scipy.special import eval_jacobi, poch, roots_jacobi

TRIANGLE = "tri"
QUAD = "quad"
KINDS = (TRIANGLE, QUAD)
# total-degree space P_p on the reference square, spanned by the Legendre
# products of Q_p with i + j <= p
QUAD_P = "quad_p"
BASIS_KINDS = (TRIANGLE, QUAD, QUAD_P)


def geometry_kind(kind: str) -> str:
    """Reference element shape behind a basis kind."""
    return QUAD if kind == QUAD_P else kind

MAX_DERIV = 4


@lru_cache(maxsize=None)
def multi_indices(max_deriv: int) -> tuple[tuple[int, int], ...]:
    """Multi-indices of total order <= max_deriv: (0,0), (1,0), (0,1), (2,0), ..."""
    return tuple((d - b, b) for d in range(max_deriv + 1) for b in range(d + 1))


def deriv_index(a: int, b: int) -> int:
    d = a + b
    return d * (d + 1) // 2 + b


def dof_count(kind: str, p: int) -> int:
    if p < 0:
        raise ValueError(f"polynomial degree must be >= 0, got {p}")
    if kind in (TRIANGLE, QUAD_P):
        return (p + 1) * (p + 2) // 2
    if kind == QUAD:
        return (p + 1) ** 2
    raise ValueError(f"unknown element kind {kind!r}")


def mode_ids(kind: str, p: int) -> list[tuple[int, int]]:
    if kind in (TRIANGLE, QUAD_P):
        return [(d - j, j) for d in range(p + 1) for j in range(d + 1)]
    return sorted(((i, j) for i in range(p + 1) for j in range(p + 1)),
                  key=lambda ij: (max(ij), ij[1], ij[0]))


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def gauss_interval(order: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact to polynomial degree ``order``."""
    n = max(order, 0) // 2 + 1
    x, w = leg.leggauss(n)
    return QuadratureRule((x + 1.0) / 2.0, w / 2.0)


@lru_cache(maxsize=None)
def quadrature(kind: str, order: int) -> QuadratureRule:
    """Positive-weight rule on the reference element, exact to ``order``.

    Triangles use the collapsed (Duffy) tensor rule with Gauss-Jacobi points
    in the collapsed direction, so no weight is ever negative.
    """
    if order < 0:
        raise ValueError("quadrature order must be nonnegative")
    kind = geometry_kind(kind)
    g = gauss_interval(order)
    if kind == QUAD:
        X, Y = np.meshgrid(g.points, g.points, indexing="ij")
        W = np.outer(g.weights, g.weights)
        pts = np.column_stack([X.ravel(), Y.ravel()])
        return QuadratureRule(pts, W.ravel())
    if kind == TRIANGLE:
        n = order // 2 + 1
        v, wv = roots_jacobi(n, 1.0, 0.0)
        v = (v + 1.0) / 2.0
        wv = wv / 4.0
        U, V = np.meshgrid(g.points, v, indexing="ij")
        W = np.outer(g.weights, wv)
        pts = np.column_stack([(U * (1.0 - V)).ravel(), V.ravel()])
        return QuadratureRule(pts, W.ravel())
    raise ValueError(f"unknown element kind {kind!r}")


# {{{ jets: truncated bivariate Taylor coefficients, shape (K, npts)

@lru_cache(maxsize=None)
def _shift_maps(m: int):
    idx = multi_indices(m)
    sx = np.array([deriv_index(a - 1, b) if a > 0 else -1 for a, b in idx])
    sy = np.array([deriv_index(a, b - 1) if b > 0 else -1 for a, b in idx])
    return sx, sy


def _shift(jet, smap):
    out = np.zeros_like(jet)
    ok = smap >= 0
    out[ok] = jet[smap[ok]]
    return out


def _dubiner_table(p: int, pts: np.ndarray, m: int) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    K = len(multi_indices(m))
    sx, sy = _shift_maps(m)
    w = 2.0 * x + y - 1.0
    s = 1.0 - y

    # scaled Legendre Q_i = P_i(a) s^i with a*s = w, via the three-term recurrence
    Q = []
    q0 = np.zeros((K, len(x)))
    q0[0] = 1.0
    Q.append(q0)
    if p >= 1:
        q1 = np.zeros_like(q0)
        q1[0] = w
        if m >= 1:
            q1[deriv_index(1, 0)] = 2.0
            q1[deriv_index(0, 1)] = 1.0
        Q.append(q1)
    for n in range(1, p):
        qn, qm = Q[n], Q[n - 1]
        wq = w * qn + 2.0 * _shift(qn, sx) + _shift(qn, sy)
        sq = s * s * qm - 2.0 * s * _shift(qm, sy) + _shift(_shift(qm, sy), sy)
        Q.append(((2 * n + 1) * wq - n * sq) / (n + 1))

    b = 2.0 * y - 1.0
    table = []
    for i, j in mode_ids(TRIANGLE, p):
        alpha = 2 * i + 1
        jc = np.zeros((m + 1, len(x)))
        for k in range(min(j, m) + 1):
            jc[k] = poch(j + alpha + 1, k) * eval_jacobi(j - k, alpha + k, k, b) / factorial(k)
        out = np.zeros((K, len(x)))
        for kk, (a_, b_) in enumerate(multi_indices(m)):
            acc = 0.0
            for k in range(b_ + 1):
                acc = acc + Q[i][deriv_index(a_, b_ - k)] * jc[k]
            out[kk] = acc
        table.append(out)
    table = np.array(table)  # (nb, K, npts)
    fact = np.array([factorial(a_) * factorial(b_) for a_, b_ in multi_indices(m)], dtype=float)
    table *= fact[None, :, None]
    return table


@lru_cache(maxsize=None)
def _dubiner_norms(p: int) -> np.ndarray:
    rule = quadrature(TRIANGLE, 2 * p + 2)
    vals = _dubiner_table(p, rule.points, 0)[:, 0, :]
    return np.sqrt((vals**2) @ rule.weights)


def _legendre_derivs(n: int, t: np.ndarray, m: int) -> np.ndarray:
    """Derivatives 0..m of the shifted orthonormal Legendre polynomial on [0,1]."""
    c = np.zeros(n + 1)
    c[n] = np.sqrt(2 * n + 1)
    out = np.empty((m + 1, len(t)))
    for k in range(m + 1):
        ck = leg.legder(c, k) * 2.0**k if k else c
        out[k] = leg.legval(2.0 * t - 1.0, ck) if len(ck) else 0.0
    return out


def _quad_table(p: int, pts: np.ndarray, m: int, kind: str = QUAD) -> np.ndarray:
    lx = [_legendre_derivs(i, pts[:, 0], m) for i in range(p + 1)]
    ly = [_legendre_derivs(j, pts[:, 1], m) for j in range(p + 1)]
    idx = multi_indices(m)
    modes = mode_ids(kind, p)
    table = np.empty((len(modes), len(idx), len(pts)))
    for n, (i, j) in enumerate(modes):
        for k, (a, b) in enumerate(idx):
            table[n, k] = lx[i][a] * ly[j][b]
    return table


def eval_basis(kind: str, p: int, points, max_deriv: int = 0) -> np.ndarray:
    """Tabulate basis functions and their partial derivatives.

    Returns an array of shape ``(n_basis, n_points, n_multi)`` where the last
    axis follows :func:`multi_indices` ``(max_deriv)``.
    """
    if p < 0:
        raise ValueError(f"polynomial degree must be >= 0, got {p}")
    if not 0 <= max_deriv <= MAX_DERIV:
        raise ValueError(f"max_deriv must lie in 0..{MAX_DERIV}")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if kind in (QUAD, QUAD_P):
        table = _quad_table(p, pts, max_deriv, kind)
    elif kind == TRIANGLE:
        table = _dubiner_table(p, pts, max_deriv) / _dubiner_norms(p)[:, None, None]
    else:
        raise ValueError(f"unknown element kind {kind!r}")
    return np.ascontiguousarray(table.transpose(0, 2, 1))


@lru_cache(maxsize=4096)
def _cached_table(kind, p, pts_key, max_deriv):
    pts = np.array(pts_key).reshape(-1, 2)
    table = eval_basis(kind, p, pts, max_deriv)
    table.flags.writeable = False
    return table


def cached_basis(kind: str, p: int, points: np.ndarray, max_deriv: int) -> np.ndarray:
    """Memoised :func:`eval_basis` for point sets that recur (quadrature nodes)."""
    return _cached_table(kind, p, tuple(np.asarray(points, dtype=float).ravel()), max_deriv)


def reference_mass(kind: str, p: int) -> np.ndarray:
    rule = quadrature(kind, 2 * p + 2)
    v = eval_basis(kind, p, rule.points)[:, :, 0]
    return (v * rule.weights) @ v.T


def reference_area(kind: str) -> float:
    kind = geometry_kind(kind)
    return 0.5 if kind == TRIANGLE else 1.0


def reference_vertices(kind: str) -> np.ndarray:
    kind = geometry_kind(kind)
    if kind == TRIANGLE:
        return np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    return np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
