"""Benchmark problems: exact solutions with their data."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dg_system import BoundaryData
from .mesh import LSHAPE, UNIT_SQUARE

SINGULAR_EXPONENT = 4.0 / 3.0


@dataclass(frozen=True)
class BenchmarkProblem:
    name: str
    domain: str
    f: Callable
    u: Callable
    grad: Callable
    hess: Callable
    singular_point: tuple | None = None

    @property
    def boundary(self) -> BoundaryData:
        return BoundaryData.from_exact(self.u, self.grad, self.hess)


def _hess(xx, xy, yy):
    out = np.empty(xx.shape + (2, 2))
    out[..., 0, 0] = xx
    out[..., 0, 1] = out[..., 1, 0] = xy
    out[..., 1, 1] = yy
    return out


# {{{ L-shaped domain, corner singularity

def _lshape_f0(x, k):
    """k-th complex derivative of ``F(z) = z^a`` on the branch ``theta in [0, 2pi)``.

    ``u = Im F`` is harmonic, hence biharmonic; the cut along the positive
    x-axis only touches the boundary arm ``theta = 0`` of the L-shape.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = x[:, 0] + 1j * x[:, 1]
    a = SINGULAR_EXPONENT
    r = np.abs(z)
    theta = np.mod(np.angle(z), 2 * np.pi)  # in [0, 2pi), the domain uses [0, 3pi/2]
    coef = 1.0
    for j in range(k):
        coef *= a - j
    with np.errstate(divide="ignore", invalid="ignore"):
        val = coef * r ** (a - k) * np.exp(1j * (a - k) * theta)
    return np.where(r > 0, val, 0.0)


def _lshape_u(x):
    return _lshape_f0(x, 0).imag


def _lshape_grad(x):
    d = _lshape_f0(x, 1)
    return np.column_stack([d.imag, d.real])


def _lshape_hess(x):
    d = _lshape_f0(x, 2)
    return _hess(d.imag, d.real, -d.imag)


def lshape_singular() -> BenchmarkProblem:
    """``u = r^{4/3} sin(4 theta / 3)`` on ``(-1,1)^2`` minus ``[0,1) x (-1,0]``; ``f = 0``."""
    return BenchmarkProblem("lshape_singular", LSHAPE, lambda x: np.zeros(len(np.atleast_2d(x))),
                            _lshape_u, _lshape_grad, _lshape_hess, singular_point=(0.0, 0.0))


# {{{ smooth clamped solution on the unit square

def _sq_parts(t):
    S = np.sin(np.pi * t) ** 2
    S1 = np.pi * np.sin(2 * np.pi * t)
    S2 = 2 * np.pi**2 * np.cos(2 * np.pi * t)
    S4 = -8 * np.pi**4 * np.cos(2 * np.pi * t)
    return S, S1, S2, S4


def square_smooth() -> BenchmarkProblem:
    """``u = (sin(pi x) sin(pi y))^2`` on the unit square, clamped boundary."""

    def u(x):
        x = np.atleast_2d(x)
        return _sq_parts(x[:, 0])[0] * _sq_parts(x[:, 1])[0]

    def grad(x):
        x = np.atleast_2d(x)
        X, Y = _sq_parts(x[:, 0]), _sq_parts(x[:, 1])
        return np.column_stack([X[1] * Y[0], X[0] * Y[1]])

    def hess(x):
        x = np.atleast_2d(x)
        X, Y = _sq_parts(x[:, 0]), _sq_parts(x[:, 1])
        return _hess(X[2] * Y[0], X[1] * Y[1], X[0] * Y[2])

    def f(x):
        x = np.atleast_2d(x)
        X, Y = _sq_parts(x[:, 0]), _sq_parts(x[:, 1])
        return X[3] * Y[0] + 2 * X[2] * Y[2] + X[0] * Y[3]

    return BenchmarkProblem("square_smooth", UNIT_SQUARE, f, u, grad, hess)


def polynomial_xy() -> BenchmarkProblem:
    """Manufactured ``u = x^2 y^2`` with ``f = 8`` (exactly representable for p >= 2 on quads)."""

    def u(x):
        x = np.atleast_2d(x)
        return x[:, 0] ** 2 * x[:, 1] ** 2

    def grad(x):
        x = np.atleast_2d(x)
        return np.column_stack([2 * x[:, 0] * x[:, 1] ** 2, 2 * x[:, 1] * x[:, 0] ** 2])

    def hess(x):
        x = np.atleast_2d(x)
        return _hess(2 * x[:, 1] ** 2, 4 * x[:, 0] * x[:, 1], 2 * x[:, 0] ** 2)

    return BenchmarkProblem("polynomial_xy", UNIT_SQUARE, lambda x: np.full(len(np.atleast_2d(x)), 8.0),
                            u, grad, hess)


PROBLEMS = {
    "lshape_singular": lshape_singular,
    "square_smooth": square_smooth,
    "polynomial_xy": polynomial_xy,
}


def get_problem(name: str) -> BenchmarkProblem:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise ValueError(f"unknown benchmark {name!r}; choose from {sorted(PROBLEMS)}") from None
