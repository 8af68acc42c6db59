import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hpbiharm.mesh import (LSHAPE, MINUS, ONE_IRREGULAR, PLUS, QUAD, RED_GREEN, TRIANGLE,
                           UNIT_SQUARE, MeshError, build_initial, check_invariants, coarsen,
                           face_trace_map, is_symmetric, refine, smooth_degrees)


def hanging_faces(mesh):
    return [f for f in mesh.faces if f.hanging]


def element_at(mesh, point):
    """Active element whose centroid is closest to ``point``."""
    ids = mesh.active_ids()
    cents = np.array([mesh.element_vertices(e).mean(axis=0) for e in ids])
    return ids[int(np.argmin(np.linalg.norm(cents - point, axis=1)))]


def physical(mesh, eid, ref):
    x0, J = mesh.affine(eid)
    return x0 + J @ np.asarray(ref)


class TestBuildInitial:
    def test_unit_square_2x2(self):
        m = build_initial(UNIT_SQUARE, QUAD, 2)
        assert m.n_active == 4
        assert len(m.vertices) == 9
        assert len(m.faces) == 12
        assert sum(f.minus is not None for f in m.faces) == 4

    def test_lshape_one_per_side(self):
        m = build_initial(LSHAPE, QUAD, 1)
        assert m.n_active == 3
        assert sum(m.area(e) for e in m.active_ids()) == pytest.approx(3.0)
        cents = {tuple(m.element_vertices(e).mean(axis=0)) for e in m.active_ids()}
        assert cents == {(-0.5, -0.5), (-0.5, 0.5), (0.5, 0.5)}

    def test_triangle_square(self):
        m = build_initial(UNIT_SQUARE, TRIANGLE, 1)
        assert m.n_active == 2
        assert all(m.area(e) == pytest.approx(0.5) for e in m.active_ids())

    def test_lshape_twelve_squares(self):
        m = build_initial(LSHAPE, QUAD, 2, degree=3)
        assert m.n_active == 12
        assert set(m.degree[e] for e in m.active_ids()) == {3}
        assert check_invariants(m) == []

    def test_errors(self):
        with pytest.raises(MeshError):
            build_initial(UNIT_SQUARE, QUAD, 0)
        with pytest.raises(MeshError):
            build_initial("disk", QUAD, 2)
        with pytest.raises(MeshError):
            build_initial(UNIT_SQUARE, "hex", 2)
        with pytest.raises(MeshError):
            build_initial(UNIT_SQUARE, QUAD, 2, degree=1)

    def test_diameter_is_vertex_hull_diameter(self):
        m = build_initial(LSHAPE, TRIANGLE, 2)
        for e in m.active_ids():
            xs = m.element_vertices(e)
            d = max(np.linalg.norm(a - b) for a in xs for b in xs)
            assert m.elements[e].h == pytest.approx(d, rel=1e-15)


class TestRefine:
    def test_single_mark_creates_two_hanging_faces(self):
        m = refine(build_initial(UNIT_SQUARE, QUAD, 2), {0})
        assert m.n_active == 7
        assert len(m.mortar_groups) == 2
        assert len(hanging_faces(m)) == 4  # two sub-faces per coarse face
        assert check_invariants(m) == []

    def test_repeated_corner_refinement_triggers_closure(self):
        m = build_initial(UNIT_SQUARE, QUAD, 2)
        m = refine(m, {element_at(m, (0.25, 0.25))})
        target = element_at(m, (0.375, 0.375))  # child touching the centre
        m = refine(m, {target})
        assert check_invariants(m) == []
        used = m._used_vertices()
        assert max(max(m.hanging_profile(e, used)) for e in m.active_ids()) <= 1
        # the neighbours across the centre were split by the closure
        assert m.n_active > 10

    def test_red_refinement_of_both_triangles(self):
        m = refine(build_initial(UNIT_SQUARE, TRIANGLE, 1), {0, 1})
        assert m.n_active == 8
        areas = [m.area(e) for e in m.active_ids()]
        np.testing.assert_allclose(areas, 1.0 / 8.0, rtol=1e-14)
        assert hanging_faces(m) == []

    def test_red_green_rejected_on_quads(self):
        with pytest.raises(MeshError):
            refine(build_initial(UNIT_SQUARE, QUAD, 2), {0}, RED_GREEN)

    def test_refine_inactive_rejected(self):
        m = build_initial(UNIT_SQUARE, QUAD, 2)
        r = refine(m, {0})
        with pytest.raises(MeshError):
            refine(r, {0})

    def test_children_inherit_degree_and_tile_parent(self):
        m = build_initial(UNIT_SQUARE, QUAD, 2, degree=4)
        r = refine(m, {3})
        kids = r.elements[3].children
        assert all(r.degree[k] == 4 for k in kids)
        assert sum(r.area(k) for k in kids) == pytest.approx(m.area(3), rel=1e-14)

    def test_red_green_has_no_hanging_nodes(self):
        m = build_initial(UNIT_SQUARE, TRIANGLE, 2)
        m = refine(m, {0}, RED_GREEN)
        assert hanging_faces(m) == []
        assert check_invariants(m) == []
        green = [e for e in m.active() if e.green]
        assert green
        # marking a green element red-refines its parent instead
        m2 = refine(m, {green[0].id}, RED_GREEN)
        assert hanging_faces(m2) == []
        assert check_invariants(m2) == []
        assert not m2.elements[green[0].parent].active


class TestCoarsen:
    def test_refine_then_coarsen_restores_original(self):
        m = build_initial(UNIT_SQUARE, QUAD, 2)
        r = refine(m, {1})
        c = coarsen(r, set(r.elements[1].children))
        assert c.dump() == m.dump()

    def test_partial_family_is_ignored(self):
        m = build_initial(UNIT_SQUARE, QUAD, 2)
        r = refine(m, {1})
        c = coarsen(r, set(r.elements[1].children[:3]))
        assert c.dump() == r.dump()

    def test_level_zero_mark_is_ignored(self):
        m = build_initial(UNIT_SQUARE, QUAD, 2)
        assert coarsen(m, {0, 1}).dump() == m.dump()

    def test_merge_blocked_when_it_would_create_double_hanging_nodes(self):
        m = build_initial(UNIT_SQUARE, QUAD, 2)
        m = refine(m, {element_at(m, (0.25, 0.25))})
        m = refine(m, {element_at(m, (0.375, 0.375))})
        # the family at (0.25, 0.25) has a refined child; its neighbour's family must not merge
        ne = m.elements[element_at(m, (0.625, 0.375))]
        fam = set(m.elements[ne.parent].children)
        c = coarsen(m, fam)
        assert check_invariants(c) == []

    def test_coarsened_parent_takes_max_degree(self):
        m = build_initial(UNIT_SQUARE, QUAD, 2)
        r = refine(m, {0})
        kids = r.elements[0].children
        r.degree[kids[2]] = 3
        c = coarsen(r, set(kids))
        assert c.degree[0] == 3


class TestTraceMaps:
    def test_conforming_face_endpoints_coincide(self):
        m = build_initial(UNIT_SQUARE, QUAD, 2)
        for f in m.faces:
            if f.minus is None:
                continue
            tp, tm = face_trace_map(m, f, PLUS), face_trace_map(m, f, MINUS)
            for s in (0.0, 1.0):
                np.testing.assert_allclose(physical(m, f.plus, tp(s)), physical(m, f.minus, tm(s)), atol=1e-14)

    def test_hanging_face_covers_half_reference_edge(self):
        m = refine(build_initial(UNIT_SQUARE, QUAD, 2), {0})
        for f in hanging_faces(m):
            coarse = f.plus if m.elements[f.plus].level == 0 else f.minus
            side = PLUS if coarse == f.plus else MINUS
            tmap = face_trace_map(m, f, side)
            length = np.linalg.norm(np.subtract(tmap.end, tmap.start))
            assert length == pytest.approx(0.5, abs=1e-13)

    def test_inverse_composition_is_identity(self):
        m = refine(build_initial(LSHAPE, TRIANGLE, 1), {0, 3})
        s = np.linspace(0, 1, 7)
        for f in m.faces:
            sides = [PLUS] if f.minus is None else [PLUS, MINUS]
            for side in sides:
                tmap = face_trace_map(m, f, side)
                np.testing.assert_allclose(tmap.inverse(tmap(s)), s, atol=1e-12)

    def test_minus_on_boundary_face_rejected(self):
        m = build_initial(UNIT_SQUARE, QUAD, 1)
        with pytest.raises(MeshError):
            face_trace_map(m, m.faces[0], MINUS)


def test_dump_format_and_ordering():
    m = build_initial(UNIT_SQUARE, QUAD, 1, degree=3)
    lines = m.dump().splitlines()
    assert lines[:4] == ["v 0 0.0 0.0", "v 1 1.0 0.0", "v 2 1.0 1.0", "v 3 0.0 1.0"]
    assert lines[4] == "e 0 quad 3 0 1 2 3"
    assert all(line.startswith("f ") and line.endswith(" -") for line in lines[5:])
    assert len(lines) == 9


def test_smoothing_raises_lower_neighbour():
    m = build_initial(UNIT_SQUARE, QUAD, 3)
    m.degree[4] = 6
    smooth_degrees(m)
    assert check_invariants(m) == []
    assert m.degree[4] == 6  # never lowered
    assert all(m.degree[e] >= 2 for e in m.active_ids())


def test_initial_lshape_is_symmetric():
    for kind in (QUAD, TRIANGLE):
        assert is_symmetric(build_initial(LSHAPE, kind, 2))
    m = refine(build_initial(LSHAPE, QUAD, 2), {0})
    assert not is_symmetric(m)


def _random_history(kind, closure, seed, steps):
    rng = np.random.default_rng(seed)
    m = build_initial(UNIT_SQUARE if seed % 2 else LSHAPE, kind, 2)
    history = [m]
    for _ in range(steps):
        ids = m.active_ids()
        if rng.random() < 0.7 or len(history) == 1:
            k = int(rng.integers(1, max(2, len(ids) // 3)))
            m = refine(m, set(rng.choice(ids, size=k, replace=False).tolist()), closure)
        else:
            m = coarsen(m, set(rng.choice(ids, size=len(ids) // 2, replace=False).tolist()))
        history.append(m)
    return history


@given(seed=st.integers(0, 10_000), steps=st.integers(1, 4),
       kind_closure=st.sampled_from([(QUAD, ONE_IRREGULAR), (TRIANGLE, ONE_IRREGULAR), (TRIANGLE, RED_GREEN)]))
def test_invariants_after_random_refine_coarsen(seed, steps, kind_closure):
    kind, closure = kind_closure
    for m in _random_history(kind, closure, seed, steps):
        assert check_invariants(m) == []
        if closure == RED_GREEN:
            assert hanging_faces(m) == []
        for f in m.faces:
            if f.minus is not None:
                assert f.plus < f.minus


@given(seed=st.integers(0, 10_000))
def test_operation_sequences_are_deterministic(seed):
    a = _random_history(TRIANGLE, RED_GREEN, seed, 3)[-1]
    b = _random_history(TRIANGLE, RED_GREEN, seed, 3)[-1]
    assert a.dump() == b.dump()
