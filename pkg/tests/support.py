"""Shared helpers for the estimator invariance tests."""
from dataclasses import replace

import numpy as np

from hpbiharm.dg_system import BoundaryData, DGSolution, DofMap
from hpbiharm.mesh import (LSHAPE, ONE_IRREGULAR, QUAD, RED_GREEN, TRIANGLE, UNIT_SQUARE,
                           build_initial, refine, smooth_degrees)


def random_mesh(seed, n_elements=20):
    """Randomly refined mesh with at least ``n_elements`` active elements and mixed degrees."""
    rng = np.random.default_rng(seed)
    kind = (QUAD, TRIANGLE)[seed % 2]
    closure = RED_GREEN if kind == TRIANGLE and seed % 4 == 1 else ONE_IRREGULAR
    domain = (UNIT_SQUARE, LSHAPE)[(seed // 2) % 2]
    m = build_initial(domain, kind, 1 if domain == LSHAPE else 2, degree=2)
    while m.n_active < n_elements:
        ids = m.active_ids()
        m = refine(m, {int(rng.choice(ids))}, closure)
    for e in m.active_ids():
        m.degree[e] = int(rng.integers(2, 5))
    smooth_degrees(m)
    return m


def smooth_boundary():
    def u(x):
        return np.sin(x[:, 0]) * np.cos(2 * x[:, 1]) + x[:, 0] ** 3

    def grad(x):
        return np.column_stack([np.cos(x[:, 0]) * np.cos(2 * x[:, 1]) + 3 * x[:, 0] ** 2,
                                -2 * np.sin(x[:, 0]) * np.sin(2 * x[:, 1])])

    def hess(x):
        xx = -np.sin(x[:, 0]) * np.cos(2 * x[:, 1]) + 6 * x[:, 0]
        xy = -2 * np.cos(x[:, 0]) * np.sin(2 * x[:, 1])
        yy = -4 * np.sin(x[:, 0]) * np.cos(2 * x[:, 1])
        return np.stack([np.stack([xx, xy], -1), np.stack([xy, yy], -1)], -2)

    return BoundaryData.from_exact(u, grad, hess)


def random_solution(mesh, seed):
    dm = DofMap.build(mesh)
    return DGSolution(mesh, dm, np.random.default_rng(seed).normal(size=dm.total_dofs))


def load(x):
    return 1.0 + x[:, 0] * x[:, 1]


def flip_faces(mesh, rng, fraction=0.5, tangent_only=False):
    """Reverse orientation (or only the tangent) of a random subset of faces in place."""
    faces = list(mesh.faces)
    out = []
    for f in faces:
        if rng.random() >= fraction:
            out.append(f)
        elif tangent_only or f.minus is None:
            out.append(replace(f, tangent=-f.tangent))
        else:
            out.append(replace(f, plus=f.minus, minus=f.plus, normal=-f.normal, tangent=-f.tangent,
                               vertex_ids=tuple(reversed(f.vertex_ids))))
    mesh._faces = out
    return mesh
