"""Extremal constants of polynomial inverse and extension estimates.

Each constant is the largest eigenvalue of a symmetric pencil ``(A, B)`` over
the local polynomial space on a reference element, i.e. the supremum of a
squared-norm ratio ``(A q, q) / (B q, q)``.  Growth in ``p`` is measured by a
log-log least-squares fit.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from numpy.polynomial import legendre as leg

from .fem_basis import QUAD, TRIANGLE, eval_basis, gauss_interval, quadrature

TRACE, H1, BUBBLE = "trace", "h1", "bubble"
EXT_L2, EXT_H1, EXT_H2 = "extension_l2", "extension_h1", "extension_h2"

# predicted growth exponents: squared ratios for the pencils, plain norm
# ratios for the extension (whose ratios are reported unsquared)
PREDICTED = {TRACE: 2.0, H1: 4.0, EXT_L2: -1.0, EXT_H1: 1.0, EXT_H2: 3.0}


def _check_kind(kind):
    if kind not in (TRIANGLE, QUAD):
        raise ValueError(f"unknown element kind {kind!r}")


def _check_degree(p):
    if p < 0:
        raise ValueError("p must be nonnegative")


def _lambda_max(A, B=None) -> float:
    """Largest eigenvalue of ``A x = lam B x`` with ``B`` SPD."""
    vals = sla.eigh(A, B, eigvals_only=True)
    return float(vals[-1])


def _cell_tables(kind, p, order, max_deriv=0):
    rule = quadrature(kind, order)
    return rule, eval_basis(kind, p, rule.points, max_deriv)


def trace_inverse_constant(kind: str, p: int) -> float:
    """``sup ||q||^2_F / ||q||^2_K`` for ``F`` the edge ``y = 0`` of the reference element.

    The cell mass is the identity for the orthonormal bases, so the kernel of
    the face mass (polynomials vanishing on ``F``) only contributes zero
    eigenvalues and needs no deflation for the maximum.
    """
    _check_kind(kind)
    _check_degree(p)
    g = gauss_interval(2 * p + 2)
    pts = np.column_stack([g.points, np.zeros_like(g.points)])
    v = eval_basis(kind, p, pts)[:, :, 0]
    face_mass = (v * g.weights) @ v.T
    rule, t = _cell_tables(kind, p, 2 * p + 2)
    cell_mass = (t[:, :, 0] * rule.weights) @ t[:, :, 0].T
    return _lambda_max(face_mass, cell_mass)


def h1_inverse_constant(kind: str, p: int) -> float:
    """``sup |q|_1^2 / ||q||_0^2`` over the reference element (0 for constants)."""
    _check_kind(kind)
    _check_degree(p)
    if p == 0:
        return 0.0
    rule, t = _cell_tables(kind, p, 2 * p + 2, max_deriv=1)
    w = rule.weights
    stiff = sum((t[:, :, k] * w) @ t[:, :, k].T for k in (1, 2))
    mass = (t[:, :, 0] * w) @ t[:, :, 0].T
    return _lambda_max(stiff, mass)


def bubble(kind: str, points) -> np.ndarray:
    """Product of the affine functions vanishing on the faces of the reference element."""
    x, y = np.asarray(points, dtype=float).T
    if kind == TRIANGLE:
        return x * y * (1.0 - x - y)
    return x * (1.0 - x) * y * (1.0 - y)


def bubble_inverse_constant(kind: str, p: int, alpha: float, beta: float) -> float:
    """``sup ||b^(alpha/2) q||^2 / ||b^(beta/2) q||^2`` with the element bubble ``b``."""
    _check_kind(kind)
    _check_degree(p)
    if not alpha > -0.5:
        raise ValueError("alpha must exceed -1/2")
    if alpha > beta:
        raise ValueError("alpha must not exceed beta")
    if alpha == beta:
        return 1.0
    rule, t = _cell_tables(kind, p, 2 * p + 10)
    v = t[:, :, 0]
    b = bubble(kind, rule.points)
    num = (v * (rule.weights * b**alpha)) @ v.T
    den = (v * (rule.weights * b**beta)) @ v.T
    return _lambda_max(num, den)


# {{{ extension operators

def _layer_rule(eps: float, n: int):
    """Composite Gauss rule on [0, 1] graded geometrically into the layer ``y ~ eps``."""
    cuts = [0.0]
    c = eps / 8.0
    while c < 1.0:
        cuts.append(c)
        c *= 2.0
    cuts.append(1.0)
    g = gauss_interval(2 * n - 1)
    pts, wts = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        pts.append(a + (b - a) * g.points)
        wts.append((b - a) * g.weights)
    return np.concatenate(pts), np.concatenate(wts)


def _face_legendre(p, x, m=2):
    """Orthonormal Legendre basis on F = [0, 1] and its x-derivatives up to ``m``."""
    out = np.empty((m + 1, p + 1, len(x)))
    for j in range(p + 1):
        c = np.zeros(j + 1)
        c[j] = np.sqrt(2 * j + 1)
        for k in range(m + 1):
            ck = leg.legder(c, k) * 2.0**k if k else c
            out[k, j] = leg.legval(2 * x - 1, ck) if len(ck) else 0.0
    return out


def extension_derivatives(kind: str, eps: float, q, x, y):
    """Value, gradient and Hessian of ``E(q)`` at points; ``q = (q, q', q'')`` arrays.

    Square: ``E = q(x) (1 - y) exp(-y/eps)``.
    Triangle: ``E = q(x) x (1 - x - y) exp(-y/eps)``.
    Returned arrays have shape ``(..., npts)``, ``(2, ..., npts)`` and
    ``(2, 2, ..., npts)``.
    """
    q0, q1, q2 = q
    e = np.exp(-y / eps)
    e1 = -e / eps
    e2 = e / eps**2
    if kind == QUAD:
        g, g1, g2 = (1 - y) * e, -e + (1 - y) * e1, -2 * e1 + (1 - y) * e2
        val = q0 * g
        grad = np.array([q1 * g, q0 * g1])
        hess = np.array([[q2 * g, q1 * g1], [q1 * g1, q0 * g2]])
        return val, grad, hess
    s = 1 - x - y
    r, r1, r2 = q0 * x, q1 * x + q0, q2 * x + 2 * q1
    val = r * s * e
    ex = (r1 * s - r) * e
    ey = r * (-e + s * e1)
    exx = (r2 * s - 2 * r1) * e
    exy = -r1 * e + (r1 * s - r) * e1
    eyy = r * (-2 * e1 + s * e2)
    return val, np.array([ex, ey]), np.array([[exx, exy], [exy, eyy]])


def _extension_rule(kind, p, eps):
    n = p + 8
    y, wy = _layer_rule(eps, n)
    g = gauss_interval(2 * p + 12)
    if kind == QUAD:
        X, Y = np.meshgrid(g.points, y, indexing="ij")
        W = np.outer(g.weights, wy)
    else:
        X = np.outer(g.points, 1 - y)
        Y = np.broadcast_to(y, X.shape)
        W = np.outer(g.weights, wy * (1 - y))
    return X.ravel(), np.ascontiguousarray(Y).ravel(), W.ravel()


def extension_scalings(kind: str, p: int) -> dict:
    """Worst-case ``||E q|| / ||q||_F`` in L2, H1 and H2 seminorms with ``eps = p^-2``.

    ``||q||_F`` is the L2 norm on the face; the face basis is orthonormal so
    each value is the square root of a largest eigenvalue.
    """
    _check_kind(kind)
    if p < 1:
        raise ValueError("extension scalings need p >= 1")
    eps = float(p) ** -2
    x, y, w = _extension_rule(kind, p, eps)
    q = _face_legendre(p, x)
    val, grad, hess = extension_derivatives(kind, eps, q, x, y)
    gram = {
        EXT_L2: (val * w) @ val.T,
        EXT_H1: sum((grad[a] * w) @ grad[a].T for a in range(2)),
        EXT_H2: sum((hess[a, b] * w) @ hess[a, b].T for a in range(2) for b in range(2)),
    }
    return {k: float(np.sqrt(max(_lambda_max(G), 0.0))) for k, G in gram.items()}


# {{{ growth fits

@dataclass
class ConstantSeries:
    name: str
    kind: str
    p_values: np.ndarray
    values: np.ndarray
    predicted: float = float("nan")
    exponent: float = field(default=float("nan"))
    r2: float = field(default=float("nan"))

    def __post_init__(self):
        self.p_values = np.asarray(self.p_values, dtype=float)
        self.values = np.asarray(self.values, dtype=float)


def fit_growth(p_values, values) -> tuple[float, float]:
    """Least-squares slope of ``log C`` against ``log p`` and the R^2 of the fit."""
    p = np.asarray(p_values, dtype=float)
    c = np.asarray(values, dtype=float)
    if len(p) < 4 or len(p) != len(c):
        raise ValueError("need at least four (p, C) pairs")
    if np.any(c <= 0) or np.any(p <= 0):
        raise ValueError("growth fit needs positive p and C")
    X, Y = np.log(p), np.log(c)
    slope, icept = np.polyfit(X, Y, 1)
    resid = Y - (slope * X + icept)
    ss = np.sum((Y - Y.mean()) ** 2)
    r2 = 1.0 - float(resid @ resid) / ss if ss > 0 else 1.0
    return float(slope), r2


def fit_growth_exponent(series: ConstantSeries) -> float:
    series.exponent, series.r2 = fit_growth(series.p_values, series.values)
    return series.exponent


def constant_series(name: str, kind: str, p_values, alpha: float = 0.0, beta: float = 1.0) -> ConstantSeries:
    """Evaluate one constant over a range of degrees and fit its growth."""
    p_values = list(p_values)
    if name == TRACE:
        vals, pred = [trace_inverse_constant(kind, p) for p in p_values], PREDICTED[TRACE]
    elif name == H1:
        vals, pred = [h1_inverse_constant(kind, p) for p in p_values], PREDICTED[H1]
    elif name == BUBBLE:
        vals = [bubble_inverse_constant(kind, p, alpha, beta) for p in p_values]
        pred = 2.0 * 2 * (beta - alpha)  # squared ratio, d = 2
    elif name in (EXT_L2, EXT_H1, EXT_H2):
        vals, pred = [extension_scalings(kind, p)[name] for p in p_values], PREDICTED[name]
    else:
        raise ValueError(f"unknown constant {name!r}")
    s = ConstantSeries(name, kind, p_values, vals, pred)
    if len(p_values) >= 4 and np.all(np.asarray(vals) > 0):
        fit_growth_exponent(s)
    return s


def normalized_extension(series: ConstantSeries) -> np.ndarray:
    """Extension ratios divided by their predicted power of p."""
    return series.values / series.p_values**series.predicted


ALL_CONSTANTS = (TRACE, H1, BUBBLE, EXT_L2, EXT_H1, EXT_H2)


def sweep(kinds, p_min: int, p_max: int, names=ALL_CONSTANTS) -> list[ConstantSeries]:
    if p_min < 0 or p_max < p_min:
        raise ValueError("invalid degree range")
    out = []
    for kind in kinds:
        for name in names:
            lo = max(p_min, 1) if name.startswith("extension") else p_min
            ps = range(lo, p_max + 1)
            # growth fits only make sense for strictly positive constants
            if name == H1:
                ps = range(max(lo, 1), p_max + 1)
            out.append(constant_series(name, kind, ps))
    return out


def series_to_csv(series: list[ConstantSeries]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "p", "constant", "value", "predicted_exponent", "fitted_exponent", "r2"])
    for s in series:
        for p, v in zip(s.p_values, s.values):
            w.writerow([s.kind, int(p), s.name, repr(float(v)), s.predicted, s.exponent, s.r2])
    return buf.getvalue()
