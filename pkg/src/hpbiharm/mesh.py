"""Adaptive 2D meshes of triangles or quadrilaterals.

Elements live in a refinement forest: refining an element deactivates it and
activates its four children, coarsening does the reverse.  The face list is
derived from the active elements and describes the *broken skeleton*: when a
coarse edge carries a hanging node, it is represented by two sub-faces, each
shared with one fine neighbour (the pair is recorded in ``mortar_groups``).

Orientation conventions
-----------------------
* On every interior face ``plus`` is the neighbour with the smaller id and the
  unit normal points out of ``plus``; boundary normals point out of the domain.
* ``vertex_ids`` follow the counterclockwise boundary of ``plus`` and the
  tangent is the normal rotated by +90 degrees, i.e. it runs from the first
  vertex to the second.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .fem_basis import QUAD, QUAD_P, TRIANGLE

UNIT_SQUARE = "unit_square"
LSHAPE = "lshape"
DOMAINS = (UNIT_SQUARE, LSHAPE)
DOMAIN_AREA = {UNIT_SQUARE: 1.0, LSHAPE: 3.0}

ONE_IRREGULAR = "one_irregular"
RED_GREEN = "red_green"
CLOSURES = (ONE_IRREGULAR, RED_GREEN)

PLUS, MINUS = "plus", "minus"
INTERIOR, BOUNDARY = "interior", "boundary"

SHAPE_RATIO_MAX = 10.0

FULL_SPACE = "full"
TOTAL_DEGREE = "total"
SPACES = (FULL_SPACE, TOTAL_DEGREE)


class MeshError(ValueError):
    pass


@dataclass
class ElementRecord:
    id: int
    kind: str
    vertex_ids: tuple
    level: int
    parent: int | None = None
    children: tuple | None = None
    active: bool = True
    h: float = 0.0
    green: bool = False


@dataclass
class FaceRecord:
    id: int
    vertex_ids: tuple
    kind: str
    plus: int
    minus: int | None
    normal: np.ndarray
    tangent: np.ndarray
    h: float
    hanging: bool = False


@dataclass(frozen=True)
class TraceMap:
    """Affine map ``s -> start + s (end - start)`` from [0,1] to reference coordinates."""

    start: tuple
    end: tuple

    def __call__(self, s):
        s = np.asarray(s, dtype=float)[..., None]
        a, b = np.asarray(self.start), np.asarray(self.end)
        return a + s * (b - a)

    def inverse(self, ref):
        a, b = np.asarray(self.start), np.asarray(self.end)
        d = b - a
        return (np.asarray(ref, dtype=float) - a) @ d / (d @ d)


def _key(a, b):
    return (a, b) if a < b else (b, a)


class Mesh:
    """Forest of triangles or axis-aligned quadrilaterals plus a degree map."""

    def __init__(self, kind, vertices, cells, degree, domain, space=FULL_SPACE):
        if kind not in (TRIANGLE, QUAD):
            raise MeshError(f"unknown element kind {kind!r}")
        if space not in SPACES:
            raise MeshError(f"unknown polynomial space {space!r}")
        self.kind = kind
        self.space = space
        # basis used on the elements: Q_p on quads by default, P_p on request
        self.basis_kind = QUAD_P if (kind == QUAD and space == TOTAL_DEGREE) else kind
        self.domain = domain
        self._coords = [tuple(map(float, v)) for v in vertices]
        self.elements: list[ElementRecord] = []
        self.degree: dict[int, int] = {}
        self._mid: dict = {}
        self._edge_parent: dict = {}
        self._center: dict = {}
        self._green: dict = {}
        self._faces = None
        for cell in cells:
            eid = self._new_element(tuple(cell), level=0)
            self.degree[eid] = int(degree)

    # -- basic queries ---------------------------------------------------

    @property
    def vertices(self) -> np.ndarray:
        return np.array(self._coords)

    def coords(self, vid) -> np.ndarray:
        return np.array(self._coords[vid])

    def active_ids(self) -> list[int]:
        return [e.id for e in self.elements if e.active]

    def active(self) -> list[ElementRecord]:
        return [e for e in self.elements if e.active]

    def element(self, eid) -> ElementRecord:
        return self.elements[eid]

    @property
    def n_active(self) -> int:
        return sum(e.active for e in self.elements)

    def element_vertices(self, eid) -> np.ndarray:
        return np.array([self._coords[v] for v in self.elements[eid].vertex_ids])

    def affine(self, eid):
        """Return ``(origin, J)`` with ``x = origin + J @ xi`` on the reference element."""
        xs = self.element_vertices(eid)
        J = np.column_stack([xs[1] - xs[0], xs[-1] - xs[0]])
        return xs[0], J

    def area(self, eid) -> float:
        xs = self.element_vertices(eid)
        x, y = xs[:, 0], xs[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def inradius(self, eid) -> float:
        xs = self.element_vertices(eid)
        if len(xs) == 3:
            per = sum(np.linalg.norm(xs[i] - xs[i - 1]) for i in range(3))
            return 2.0 * self.area(eid) / per
        a = self.area(eid)
        return 0.5 * min(a / np.linalg.norm(xs[1] - xs[0]), a / np.linalg.norm(xs[3] - xs[0]))

    def local_edges(self, eid):
        vids = self.elements[eid].vertex_ids
        n = len(vids)
        return [(vids[i], vids[(i + 1) % n]) for i in range(n)]

    def dofs_summary(self):
        ps = [self.degree[e] for e in self.active_ids()]
        return min(ps), max(ps)

    def copy(self) -> "Mesh":
        new = copy.copy(self)
        new._coords = list(self._coords)
        new.elements = [copy.copy(e) for e in self.elements]
        new.degree = dict(self.degree)
        new._mid = dict(self._mid)
        new._edge_parent = dict(self._edge_parent)
        new._center = dict(self._center)
        new._green = dict(self._green)
        return new

    # -- construction helpers ----------------------------------------------

    def _new_vertex(self, xy) -> int:
        self._coords.append((float(xy[0]), float(xy[1])))
        return len(self._coords) - 1

    def _midpoint(self, a, b) -> int:
        k = _key(a, b)
        m = self._mid.get(k)
        if m is None:
            pa, pb = self._coords[a], self._coords[b]
            m = self._new_vertex(((pa[0] + pb[0]) / 2, (pa[1] + pb[1]) / 2))
            self._mid[k] = m
            self._edge_parent[_key(a, m)] = k
            self._edge_parent[_key(m, b)] = k
        return m

    def _new_element(self, vids, level, parent=None, green=False) -> int:
        eid = len(self.elements)
        xs = np.array([self._coords[v] for v in vids])
        h = max(np.linalg.norm(xs[i] - xs[j]) for i in range(len(xs)) for j in range(i))
        self.elements.append(ElementRecord(eid, self.kind, tuple(vids), level, parent, None, True, float(h), green))
        self._faces = None
        return eid

    def _split(self, eid):
        """Replace an active element by its four children (created once, then reused)."""
        el = self.elements[eid]
        if not el.active or el.green:
            raise MeshError(f"cannot split element {eid}")
        if el.children is None:
            v = el.vertex_ids
            if self.kind == QUAD:
                m01, m12, m23, m30 = (self._midpoint(v[i], v[(i + 1) % 4]) for i in range(4))
                c = self._center.get(eid)
                if c is None:
                    xs = self.element_vertices(eid)
                    c = self._center[eid] = self._new_vertex(xs.mean(axis=0))
                cells = [(v[0], m01, c, m30), (m01, v[1], m12, c), (c, m12, v[2], m23), (m30, c, m23, v[3])]
            else:
                m01, m12, m20 = (self._midpoint(v[i], v[(i + 1) % 3]) for i in range(3))
                cells = [(v[0], m01, m20), (m01, v[1], m12), (m20, m12, v[2]), (m01, m12, m20)]
            el.children = tuple(self._new_element(c, el.level + 1, eid) for c in cells)
        for c in el.children:
            self.elements[c].active = True
            self.degree[c] = self.degree[eid]
        el.active = False
        self._faces = None

    def _merge(self, pid):
        par = self.elements[pid]
        for c in par.children:
            self.elements[c].active = False
        par.active = True
        self._faces = None

    # -- hanging-node bookkeeping -----------------------------------------

    def _used_vertices(self) -> set:
        used = set()
        for e in self.elements:
            if e.active:
                used.update(e.vertex_ids)
        return used

    def _hanging_count(self, a, b, used) -> int:
        m = self._mid.get(_key(a, b))
        if m is None or m not in used:
            return 0
        return 1 + self._hanging_count(a, m, used) + self._hanging_count(m, b, used)

    def hanging_profile(self, eid, used=None):
        """Number of hanging vertices on each local edge of an active element."""
        used = self._used_vertices() if used is None else used
        return [self._hanging_count(a, b, used) for a, b in self.local_edges(eid)]

    # -- skeleton --------------------------------------------------------

    @property
    def faces(self) -> list[FaceRecord]:
        if self._faces is None:
            self._build_faces()
        return self._faces

    @property
    def mortar_groups(self) -> list[tuple]:
        if self._faces is None:
            self._build_faces()
        return self._mortars

    def _make_face(self, fid, a, b, plus, minus, hanging):
        pa, pb = np.array(self._coords[a]), np.array(self._coords[b])
        d = pb - pa
        length = float(np.hypot(*d))
        d = d / length
        n = np.array([d[1], -d[0]])
        t = np.array([-n[1], n[0]])
        kind = BOUNDARY if minus is None else INTERIOR
        return FaceRecord(fid, (a, b), kind, plus, minus, n, t, length, hanging)

    def _build_faces(self):
        owners: dict = {}
        act = [e for e in self.elements if e.active]
        for e in act:
            for a, b in self.local_edges(e.id):
                owners.setdefault(_key(a, b), []).append(e.id)
        used = self._used_vertices()
        faces, mortars = [], []
        for e in act:
            for a, b in self.local_edges(e.id):
                k = _key(a, b)
                own = owners[k]
                if len(own) == 2:
                    if e.id == min(own):
                        faces.append(self._make_face(len(faces), a, b, e.id, max(own), False))
                    continue
                if len(own) > 2:
                    raise MeshError(f"edge {k} shared by {len(own)} elements")
                m = self._mid.get(k)
                if m is not None and m in used:
                    group = []
                    for x, y in ((a, m), (m, b)):
                        sub = owners.get(_key(x, y))
                        if sub is None or len(sub) != 1:
                            raise MeshError(f"edge {k} of element {e.id} carries more than one hanging node")
                        fine = sub[0]
                        if e.id < fine:
                            f = self._make_face(len(faces), x, y, e.id, fine, True)
                        else:
                            f = self._make_face(len(faces), y, x, fine, e.id, True)
                        group.append(f.id)
                        faces.append(f)
                    mortars.append(tuple(group))
                    continue
                parent = self._edge_parent.get(k)
                if parent is not None and parent in owners:
                    continue  # sub-face, emitted from the coarse side
                faces.append(self._make_face(len(faces), a, b, e.id, None, False))
        self._faces = faces
        self._mortars = mortars

    def element_faces(self) -> dict[int, list[int]]:
        out = {eid: [] for eid in self.active_ids()}
        for f in self.faces:
            out[f.plus].append(f.id)
            if f.minus is not None:
                out[f.minus].append(f.id)
        return out

    # -- dump ----------------------------------------------------------------

    def dump(self) -> str:
        used = self._used_vertices()
        lines = [f"v {i} {x!r} {y!r}" for i, (x, y) in enumerate(self._coords) if i in used]
        for e in self.active():
            lines.append(f"e {e.id} {e.kind} {self.degree[e.id]} " + " ".join(map(str, e.vertex_ids)))
        for f in self.faces:
            lines.append(f"f {f.id} {f.kind} {f.plus} {'-' if f.minus is None else f.minus}")
        return "\n".join(lines) + "\n"


# -- construction ------------------------------------------------------------

def build_initial(domain: str, kind: str, n_per_side: int, degree: int = 2,
                  space: str = FULL_SPACE) -> Mesh:
    """Structured initial mesh of the unit square or the L-shaped domain.

    For the L-shape ``(-1,1)^2 minus [0,1) x (-1,0]``, ``n_per_side`` counts
    cells along the side of each of its three unit quadrants.  ``space``
    selects the local polynomial space: ``"full"`` (Q_p on quads, P_p on
    triangles) or ``"total"`` (P_p everywhere).
    """
    if n_per_side < 1:
        raise MeshError("n_per_side must be >= 1")
    if degree < 2:
        raise MeshError("polynomial degree must be >= 2")
    if kind not in (TRIANGLE, QUAD):
        raise MeshError(f"unsupported element kind {kind!r}")
    if domain == UNIT_SQUARE:
        n, lo, h = n_per_side, 0.0, 1.0 / n_per_side
        keep = lambda i, j: True  # noqa: E731
    elif domain == LSHAPE:
        n, lo, h = 2 * n_per_side, -1.0, 1.0 / n_per_side
        keep = lambda i, j: not (i >= n_per_side and j < n_per_side)  # noqa: E731
    else:
        raise MeshError(f"unsupported domain {domain!r}")
    vid = {}
    verts = []
    cells = []

    def v(i, j):
        if (i, j) not in vid:
            vid[i, j] = len(verts)
            verts.append((lo + i * h, lo + j * h))
        return vid[i, j]

    for j in range(n):
        for i in range(n):
            if not keep(i, j):
                continue
            a, b, c, d = v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)
            if kind == QUAD:
                cells.append((a, b, c, d))
            else:
                cells.extend([(a, b, c), (a, c, d)])
    return Mesh(kind, verts, cells, degree, domain, space)


# -- refinement ----------------------------------------------------------------

def _one_irregular_violators(mesh: Mesh, ids=None) -> list[int]:
    used = mesh._used_vertices()
    ids = mesh.active_ids() if ids is None else ids
    return [eid for eid in ids if max(mesh.hanging_profile(eid, used)) > 1]


def _close_one_irregular(mesh: Mesh, pending: Iterable[int]):
    pending = sorted(set(pending))
    while pending:
        for eid in pending:
            if mesh.elements[eid].active:
                mesh._split(eid)
        pending = _one_irregular_violators(mesh)


def _remove_greens(mesh: Mesh):
    for (pid, _), kids in mesh._green.items():
        if any(mesh.elements[k].active for k in kids):
            # the parent carries the green degrees forward (re-greening copies it back)
            mesh.degree[pid] = max(mesh.degree[k] for k in kids)
            for k in kids:
                mesh.elements[k].active = False
            mesh.elements[pid].active = True
    mesh._faces = None


def _red_violators(mesh: Mesh) -> list[int]:
    used = mesh._used_vertices()
    out = []
    for eid in mesh.active_ids():
        prof = mesh.hanging_profile(eid, used)
        if max(prof) > 1 or sum(1 for c in prof if c) > 1:
            out.append(eid)
    return out


def _add_greens(mesh: Mesh):
    used = mesh._used_vertices()
    for eid in mesh.active_ids():
        prof = mesh.hanging_profile(eid, used)
        if sum(prof) == 0:
            continue
        e = prof.index(1)
        key = (eid, e)
        kids = mesh._green.get(key)
        if kids is None:
            v = mesh.elements[eid].vertex_ids
            a, b, c = v[e], v[(e + 1) % 3], v[(e + 2) % 3]
            m = mesh._mid[_key(a, b)]
            lvl = mesh.elements[eid].level + 1
            kids = tuple(mesh._new_element(cell, lvl, eid, green=True) for cell in ((a, m, c), (m, b, c)))
            mesh._green[key] = kids
        for k in kids:
            mesh.elements[k].active = True
            mesh.degree[k] = mesh.degree[eid]
        mesh.elements[eid].active = False
    mesh._faces = None


def _red_parent(mesh: Mesh, eid: int) -> int:
    el = mesh.elements[eid]
    return el.parent if el.green else eid


def refine(mesh: Mesh, marked: Iterable[int], closure: str = ONE_IRREGULAR) -> Mesh:
    """Split marked elements into four children and restore mesh conformity rules.

    ``one_irregular`` refines neighbours until no face has more than one
    hanging node; ``red_green`` (triangles only) additionally removes every
    hanging node by green bisection.  Green elements are never refined
    themselves: marking one red-refines its parent.
    """
    if closure not in CLOSURES:
        raise MeshError(f"unknown closure {closure!r}")
    if closure == RED_GREEN and mesh.kind != TRIANGLE:
        raise MeshError("red-green closure requires a triangular mesh")
    marked = set(marked)
    bad = [e for e in marked if not mesh.elements[e].active]
    if bad:
        raise MeshError(f"cannot refine inactive elements {sorted(bad)[:5]}")
    out = mesh.copy()
    if closure == ONE_IRREGULAR:
        _close_one_irregular(out, marked)
        return out
    marked = {_red_parent(out, e) for e in marked}
    _remove_greens(out)
    pending = sorted(marked)
    while pending:
        for eid in pending:
            if out.elements[eid].active:
                out._split(eid)
        pending = _red_violators(out)
    _add_greens(out)
    return out


def has_greens(mesh: Mesh) -> bool:
    return any(e.active and e.green for e in mesh.elements)


def coarsen(mesh: Mesh, marked: Iterable[int]) -> Mesh:
    """Best-effort merge of fully marked, fully active sibling families.

    A merged parent takes the largest degree of its children.  Merges that
    would leave more than one hanging node on a face of the parent are undone.
    """
    marked = set(marked)
    out = mesh.copy()
    greens = has_greens(out)
    if greens:
        marked = {_red_parent(out, e) for e in marked if out.elements[e].active}
        _remove_greens(out)
    parents = sorted({out.elements[e].parent for e in marked
                      if out.elements[e].parent is not None and out.elements[e].active})
    merged = []
    for pid in parents:
        kids = out.elements[pid].children
        if all(out.elements[k].active and k in marked for k in kids):
            out._merge(pid)
            out.degree[pid] = max(out.degree[k] for k in kids)
            merged.append(pid)
    while merged:
        bad = _one_irregular_violators(out, [m for m in merged if out.elements[m].active])
        if greens:
            bad = sorted(set(bad) | set(e for e in _red_violators(out) if e in merged))
        if not bad:
            break
        for pid in bad:
            out._split(pid)
            for k in out.elements[pid].children:
                out.degree[k] = mesh.degree[k]
        merged = [m for m in merged if m not in bad]
    if greens:
        _add_greens(out)
    return out


def face_trace_map(mesh: Mesh, face: FaceRecord, side: str) -> TraceMap:
    """Parametrisation of ``face`` in the reference coordinates of one neighbour.

    Both sides traverse the physical face from ``vertex_ids[0]`` to
    ``vertex_ids[1]``.
    """
    if side == PLUS:
        eid = face.plus
    elif side == MINUS:
        if face.minus is None:
            raise MeshError("boundary faces have no minus side")
        eid = face.minus
    else:
        raise MeshError(f"unknown side {side!r}")
    x0, J = mesh.affine(eid)
    Jinv = np.linalg.inv(J)
    a = Jinv @ (mesh.coords(face.vertex_ids[0]) - x0)
    b = Jinv @ (mesh.coords(face.vertex_ids[1]) - x0)
    clean = lambda r: tuple(float(np.round(c, 13)) + 0.0 for c in r)  # noqa: E731
    return TraceMap(clean(a), clean(b))


# -- invariants -------------------------------------------------------------------

def smooth_degrees(mesh: Mesh) -> Mesh:
    """Raise lower degrees until neighbours differ by at most one (in place)."""
    changed = True
    while changed:
        changed = False
        for f in mesh.faces:
            if f.minus is None:
                continue
            a, b = mesh.degree[f.plus], mesh.degree[f.minus]
            if a > b + 1:
                mesh.degree[f.minus] = a - 1
                changed = True
            elif b > a + 1:
                mesh.degree[f.plus] = b - 1
                changed = True
    return mesh


def check_invariants(mesh: Mesh) -> list[str]:
    """List of violated mesh invariants (empty when the mesh is valid)."""
    problems = []
    ids = mesh.active_ids()
    total = sum(mesh.area(e) for e in ids)
    target = DOMAIN_AREA.get(mesh.domain)
    if target is not None and abs(total - target) > 1e-10 * target:
        problems.append(f"active area {total} != {target}")
    for eid in ids:
        if mesh.area(eid) <= 0:
            problems.append(f"element {eid} not counterclockwise")
        ratio = mesh.elements[eid].h / mesh.inradius(eid)
        if ratio > SHAPE_RATIO_MAX:
            problems.append(f"element {eid} shape ratio {ratio:.2f}")
        if mesh.degree[eid] < 2:
            problems.append(f"element {eid} degree {mesh.degree[eid]} < 2")
    if _one_irregular_violators(mesh):
        problems.append("face with more than one hanging node")
    try:
        faces = mesh.faces
    except MeshError as exc:
        return problems + [str(exc)]
    for f in faces:
        if abs(f.normal @ f.tangent) > 1e-14 or abs(np.linalg.norm(f.normal) - 1) > 1e-14:
            problems.append(f"face {f.id} frame not orthonormal")
        if f.minus is None:
            continue
        if f.plus >= f.minus:
            problems.append(f"face {f.id} plus/minus ordering")
        if abs(mesh.degree[f.plus] - mesh.degree[f.minus]) > 1:
            problems.append(f"face {f.id} degree jump")
        hp, hm = mesh.elements[f.plus].h, mesh.elements[f.minus].h
        if max(hp, hm) > 4 * min(hp, hm):
            problems.append(f"face {f.id} neighbours not quasi-uniform")
        centroid = mesh.element_vertices(f.plus).mean(axis=0)
        mid = (mesh.coords(f.vertex_ids[0]) + mesh.coords(f.vertex_ids[1])) / 2
        if (mid - centroid) @ f.normal <= 0:
            problems.append(f"face {f.id} normal not outward from plus")
    return problems


def is_symmetric(mesh: Mesh, transform=lambda x, y: (-y, -x)) -> bool:
    """Whether the active mesh (with degrees) is invariant under ``transform``."""
    def cells(tf):
        out = set()
        for e in mesh.active():
            pts = frozenset(tf(*mesh._coords[v]) for v in e.vertex_ids)
            out.add((pts, mesh.degree[e.id]))
        return out
    return cells(lambda x, y: (x + 0.0, y + 0.0)) == cells(lambda x, y: tuple(c + 0.0 for c in transform(x, y)))
