from __future__ import annotations

from collections import Counter
from fractions import Fraction
from math import comb

import networkx as nx
import pytest

from cubecurrents.branched import (
    InverseSystem,
    PlanePair,
    RingCover,
    branched_cover,
    build_system,
    check_orientation,
    classify_plane_cells,
    composite_key,
    subdivision_system,
    verify_wais,
)
from cubecurrents.campaign import inject_unhalved_weight
from cubecurrents.complex import HIGH, LOW, CellMap, fiber_gallery_bound, link_bound, new_unit_cube
from cubecurrents.errors import ComplexError

# ring of the 5 x 5 plane grid, counterclockwise from the lower-left ring cell
ORACLE_RING = [(1, 1), (2, 1), (3, 1), (3, 2), (3, 3), (2, 3), (1, 3), (1, 2)]


def _oracle_level1() -> tuple[Counter, dict]:
    """Faces of the first branched cover of the unit square, from geometry alone.

    Ring cells carry labels 1 and 2, all others 0.  Geometric neighbours
    share one face when at least one of them is single, and a pair of faces
    when both are doubled; sheets match except across the ring cut.
    """
    ring = {c: k for k, c in enumerate(ORACLE_RING)}
    cells = {}
    for a in range(5):
        for b in range(5):
            labels = (1, 2) if (a, b) in ring else (0,)
            for lab in labels:
                cells[(a, b), (lab,)] = Fraction(1, 2) if lab else Fraction(1)
    faces: Counter = Counter()

    def lifts(p):
        return [(p, (lab,)) for lab in ((1, 2) if p in ring else (0,))]

    for a in range(5):
        for b in range(5):
            for axis in (0, 1):
                lo = (a, b)
                hi = (a + 1, b) if axis == 0 else (a, b + 1)
                if axis == 0 and a == 0 or axis == 1 and b == 0:
                    for c in lifts(lo):
                        faces[axis, frozenset([(c, LOW)])] += 1
                if hi[axis] == 5:
                    for c in lifts(lo):
                        faces[axis, frozenset([(c, HIGH)])] += 1
                    continue
                if lo in ring and hi in ring:
                    swap = {ring[lo], ring[hi]} == {0, 7}
                    for s in (1, 2):
                        t = 3 - s if swap else s
                        faces[axis, frozenset([((lo, (s,)), HIGH), ((hi, (t,)), LOW)])] += 1
                else:
                    inc = [(c, HIGH) for c in lifts(lo)] + [(c, LOW) for c in lifts(hi)]
                    faces[axis, frozenset(inc)] += 1
    return faces, cells


def _keyed_faces(x) -> Counter:
    out: Counter = Counter()
    for f in x.faces:
        out[f.axis, frozenset((x.cells[c].key, side) for c, side in f.incident)] += 1
    return out


def _merge_boundary(faces: Counter) -> Counter:
    """Merge single-incident boundary entries of the oracle lying over one base facet."""
    merged: Counter = Counter()
    groups: dict = {}
    for (axis, inc), k in faces.items():
        if len(inc) == 1:
            (((anchor, _), side),) = inc
            groups.setdefault((axis, anchor, side), set()).update(inc)
        else:
            merged[axis, inc] += k
    for (axis, _, _), inc in groups.items():
        merged[axis, frozenset(inc)] += 1
    return merged


def test_level1_matches_geometric_oracle(system2):
    x1 = system2.complexes[1]
    faces, cells = _oracle_level1()
    assert {c.key: c.weight for c in x1.cells} == cells
    assert _keyed_faces(x1) == _merge_boundary(faces)


def test_level1_counts(system2):
    x1 = system2.complexes[1]
    sizes = Counter(len(f.incident) for f in x1.faces)
    assert len(x1.cells) == 33
    assert len(x1.faces) == 68
    assert sizes == {1: 20, 2: 32, 3: 16}


def test_ring_lifts_form_a_16_cycle(system2):
    x1 = system2.complexes[1]
    doubled = {c.id for c in x1.cells if c.label != (0,)}
    g = nx.Graph()
    for f in x1.faces:
        ids = [c for c, _ in f.incident]
        if len(ids) == 2 and set(ids) <= doubled:
            g.add_edge(*ids)
    assert len(doubled) == 16
    assert nx.is_connected(g) and all(d == 2 for _, d in g.degree()) and g.number_of_nodes() == 16


def test_ring_cover_steps():
    cover = RingCover()
    assert len(cover.cells) == 16
    start = (0, 1)
    cur, seen = start, [start]
    for _ in range(16):
        cur = cover.step(cur)
        seen.append(cur)
    assert cur == start and len(set(seen)) == 16
    assert cover.step((7, 1)) == (0, 2)
    assert cover.step((3, 2), -1) == (2, 2)


def test_classify_plane_cells():
    parts = classify_plane_cells()
    assert [len(parts[k]) for k in ("center", "ring", "outer")] == [1, 8, 16]
    assert parts["ring"] == ORACLE_RING
    with pytest.raises(ComplexError):
        classify_plane_cells(3)


def test_cell_counts_by_level(system2, system3d):
    assert [len(x.cells) for x in system2.complexes] == [1, 33, 1089, 35937]
    assert [len(x.cells) for x in system3d.complexes] == [1, 165, 27225]


def test_3d_face_incidences_frozen(system3d):
    sizes = Counter(len(f.incident) for f in system3d.complexes[2].faces)
    assert sizes == {2: 55640, 3: 14880, 1: 2950, 4: 640, 6: 320}


def test_weights_halve_on_lifts(system2):
    for x in system2.complexes[1:]:
        for c in x.cells:
            doubled = sum(1 for lab in c.label if lab)
            assert c.weight == Fraction(1, 2**doubled)


@pytest.mark.parametrize("value, expected", [("1,2", (1, 2)), ([2, 3], (2, 3)), ("(1, 3)", (1, 3))])
def test_plane_pair_parse(value, expected):
    p = PlanePair.parse(value)
    assert (p.alpha, p.beta) == expected
    assert p.axes == (expected[0] - 1, expected[1] - 1)


@pytest.mark.parametrize("value", ["2,1", "0,1", "1,1"])
def test_plane_pair_rejects(value):
    with pytest.raises(ComplexError):
        PlanePair.parse(value)


def test_plane_beyond_dimension_rejected():
    with pytest.raises(ComplexError):
        branched_cover(new_unit_cube(2, 5), (1, 3))


def test_wrong_m_rejected():
    with pytest.raises(ComplexError):
        build_system(new_unit_cube(2, 3), [(1, 2)])


def test_schedule_must_cover_depth():
    with pytest.raises(ComplexError):
        build_system(new_unit_cube(2, 5), [(1, 2)], 2)
    s = build_system(new_unit_cube(2, 5), [(1, 2)], 2, cycle=True)
    assert s.depth == 2 and s.schedule == [PlanePair(1, 2)] * 2


def test_depth_zero_system_passes():
    s = build_system(new_unit_cube(2, 5), [], 0)
    assert s.depth == 0 and verify_wais(s).passed


def test_composite_agrees_with_chained_projections(system2):
    for i, j in ((2, 0), (3, 1), (3, 0)):
        comp = system2.composite(i, j)
        x = system2.complexes[i]
        for c in range(0, len(x.cells), 97):
            parent = comp.target.parent_key(comp(c), i - j)
            assert system2.complexes[j].cells[system2.ancestor(i, c, j)].key == parent


def test_composite_key_zeroes_later_sheets():
    class C:
        anchor = (7, 3)
        label = (1, 0, 2)

    assert composite_key(C, 1) == ((7, 3), (1, 0, 0))
    assert composite_key(C, 3) == ((7, 3), (1, 0, 2))


def test_composite_bounds():
    s = build_system(new_unit_cube(2, 5), [(1, 2)])
    with pytest.raises(ComplexError):
        s.composite(0, 1)
    assert list(s.composite(1, 1).assignment) == list(range(33))


def test_wais_witnesses(system2):
    report = verify_wais(system2, diameter=False)
    assert report.passed
    assert [w.get("C_geo") for w in system2.witnesses] == [1, 7, 7, 7]
    assert [w.get("C_gall") for w in system2.witnesses[1:]] == [2, 2, 2]
    assert [w.get("C_mu") for w in system2.witnesses[1:]] == ["2/1"] * 3


def test_wais_3d(system3d):
    assert verify_wais(system3d, diameter=False).passed


def test_subdivision_system_is_admissible():
    s = subdivision_system(new_unit_cube(2, 5), 2)
    report = verify_wais(s)
    assert report.passed
    assert fiber_gallery_bound(s.maps[0]) == 1


def test_unhalved_weight_is_caught():
    s = build_system(new_unit_cube(2, 5), [(1, 2)] * 2)
    inject_unhalved_weight(s)
    report = verify_wais(s, diameter=False)
    failed = {c.name for c in report.checks if not c.passed}
    assert {"IMeas", "IFlux"} <= failed


def test_flipped_orientation_is_caught(system2):
    p = system2.maps[0]
    src = p.source.with_orientation(4, -1)
    res = check_orientation(CellMap(src, p.target, p.assignment))
    assert not res.passed and res.locator["cell"] == 4


def test_system_dataclass_basics(system2):
    assert isinstance(system2, InverseSystem)
    assert (system2.depth, system2.n, system2.m) == (3, 2, 5)
    assert system2.subdivision(1, 1) is system2.maps[1].target
    assert len(system2.subdivision(0, 2).cells) == 625


def test_link_bound_within_plane_doubling_limit(system2, system3d):
    for s in (system2, system3d):
        limit = 2 ** comb(s.n, 2) * 2**s.n
        assert all(link_bound(x) <= limit for x in s.complexes)
