import csv
import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hpbiharm.benchmarks import lshape_singular, polynomial_xy, solve_problem
from hpbiharm.dg_system import DGSolution, DofMap, PenaltyParams
from hpbiharm.estimator import effectivity, estimate
from hpbiharm.fem_basis import QUAD, TRIANGLE, deriv_index, eval_basis, gauss_interval
from hpbiharm.mesh import LSHAPE, UNIT_SQUARE, build_initial, refine

from support import flip_faces, load, random_mesh, random_solution, smooth_boundary


def assert_same_terms(a, b):
    scale = max(np.abs(a).max(), 1.0)
    np.testing.assert_allclose(b, a, rtol=1e-12, atol=1e-12 * scale)


class TestExactPolynomial:
    @pytest.mark.parametrize("p", [2, 3])
    def test_all_terms_vanish(self, p):
        prob = polynomial_xy()
        res = solve_problem(build_initial(UNIT_SQUARE, QUAD, 2, degree=p), prob)
        assert np.sqrt(res.report.terms).max() <= 1e-10
        assert res.error <= 1e-10

    def test_hanging_nodes_and_triangles(self):
        prob = polynomial_xy()
        m = refine(build_initial(UNIT_SQUARE, TRIANGLE, 2, degree=4), {0, 3})
        res = solve_problem(m, prob)
        assert res.report.eta <= 1e-8


def test_single_element_volume_term():
    m = build_initial(UNIT_SQUARE, QUAD, 1, degree=2)
    dm = DofMap.build(m)
    sol = DGSolution(m, dm, np.zeros(dm.total_dofs))
    rep = estimate(sol, lambda x: np.ones(len(x)))
    # (h/p)^4 ||1||^2 with h = sqrt(2), p = 2
    assert rep.eta2 == pytest.approx(0.25, rel=1e-14)
    assert rep.terms[0, 0] == pytest.approx(0.25, rel=1e-14)
    assert not rep.terms[0, 1:].any()


def test_lshape_first_solve_effectivity():
    prob = lshape_singular()
    res = solve_problem(build_initial(LSHAPE, QUAD, 2, degree=2), prob)
    assert 1.0 <= effectivity(res.report, res.error) <= 5.0


class TestEffectivity:
    def test_ratio(self):
        assert effectivity(2.0, 1.0) == 2.0
        assert effectivity(0.3, 0.3) == 1.0

    def test_zero_error_rejected(self):
        with pytest.raises(ValueError):
            effectivity(1.0, 0.0)


def test_p2_triangles_have_no_third_derivative_jumps():
    m = build_initial(UNIT_SQUARE, TRIANGLE, 2, degree=2)
    rep = estimate(random_solution(m, 1), load, smooth_boundary())
    assert not rep.terms[:, 1].any()
    assert rep.terms[:, 2].any()


def test_report_csv_and_totals():
    m = random_mesh(4)
    rep = estimate(random_solution(m, 2), load, smooth_boundary())
    assert np.all(rep.terms >= 0)
    np.testing.assert_allclose(rep.eta_K2, rep.terms.sum(axis=1))
    assert rep.eta2 == pytest.approx(rep.eta_K2.sum())
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0] == ["id", "level", "p", "eta1_sq", "eta2_sq", "eta3_sq", "eta4_sq", "eta5_sq",
                       "eta6_sq", "etaK_sq"]
    assert len(rows) == 1 + m.n_active


def test_reordering_elements_gives_same_indicators():
    m = random_mesh(6)
    sol = random_solution(m, 3)
    rep = estimate(sol, load, smooth_boundary())
    ids = list(reversed(sol.dofmap.element_ids))
    offsets, n = {}, 0
    coeffs = np.empty_like(sol.coeffs)
    for e in ids:
        c = sol.dofmap.counts[e]
        offsets[e] = n
        coeffs[n:n + c] = sol.local(e)
        n += c
    dm = DofMap(ids, offsets, dict(sol.dofmap.counts), n)
    rep2 = estimate(DGSolution(m, dm, coeffs), load, smooth_boundary())
    by_id = dict(zip(rep2.ids.tolist(), rep2.terms))
    assert_same_terms(rep.terms, np.array([by_id[e] for e in rep.ids.tolist()]))


@given(seed=st.integers(0, 400), tangent_only=st.booleans())
def test_orientation_flips_leave_indicators_unchanged(seed, tangent_only):
    m = random_mesh(seed)
    sol = random_solution(m, seed)
    ref = estimate(sol, load, smooth_boundary())
    flipped = flip_faces(m.copy(), np.random.default_rng(seed), tangent_only=tangent_only)
    rep = estimate(DGSolution(flipped, sol.dofmap, sol.coeffs), load, smooth_boundary())
    assert_same_terms(ref.terms, rep.terms)


def _third_and_second(mesh, sol, eid, x):
    """Gradient of the Laplacian and Hessian of u_n at physical points (independent path)."""
    x0, J = mesh.affine(eid)
    G = np.linalg.inv(J)
    ref = (x - x0) @ G.T
    t = eval_basis(mesh.basis_kind, mesh.degree[eid], ref, max_deriv=3)
    c = sol.local(eid)
    # axis-aligned or general affine map: contract the reference derivatives with G
    d = {ab: c @ t[:, :, deriv_index(*ab)] for ab in
         [(2, 0), (1, 1), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3)]}

    def ref_tensor(order):
        out = np.zeros((len(x),) + (2,) * order)
        for idx in np.ndindex(*(2,) * order):
            b = sum(idx)
            out[(slice(None),) + idx] = d[(order - b, b)]
        return out

    H = np.einsum("qij,ia,jb->qab", ref_tensor(2), G, G)
    T = np.einsum("qijk,ia,jb,kc->qabc", ref_tensor(3), G, G, G)
    return np.einsum("qaac->qc", T), H


def test_interior_face_terms_count_each_face_once():
    m = random_mesh(10)
    sol = random_solution(m, 5)
    rep = estimate(sol, load, smooth_boundary())
    s2 = s3 = 0.0
    for f in m.faces:
        if f.minus is None:
            continue
        pF = max(m.degree[f.plus], m.degree[f.minus])
        g = gauss_interval(2 * pF + 4)
        a, b = m.coords(f.vertex_ids[0]), m.coords(f.vertex_ids[1])
        x = a + g.points[:, None] * (b - a)
        w = g.weights * f.h
        gp, hp = _third_and_second(m, sol, f.plus, x)
        gm, hm = _third_and_second(m, sol, f.minus, x)
        jl = (gp - gm) @ f.normal
        jh = (hp - hm) @ f.normal
        s2 += (f.h / pF) ** 3 * float(jl**2 @ w)
        s3 += (f.h / pF) * float(np.einsum("qa,qa,q->", jh, jh, w))
    assert rep.term_sums[1] == pytest.approx(s2, rel=1e-11)
    assert rep.term_sums[2] == pytest.approx(s3, rel=1e-11)


def test_boundary_jumps_vanish_for_matching_data():
    # u_n equal to the boundary function's own polynomial part gives zero boundary residuals
    prob = polynomial_xy()
    m = build_initial(UNIT_SQUARE, QUAD, 1, degree=2)
    res = solve_problem(m, prob, PenaltyParams(20.0, 5.0))
    assert res.report.eta <= 1e-9
