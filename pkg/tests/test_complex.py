from __future__ import annotations

from fractions import Fraction

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cubecurrents.complex import (
    HIGH,
    LOW,
    CellMap,
    CubeComplex,
    check_gallery_connected,
    check_measures,
    facet_sign,
    fiber_gallery_bound,
    link_bound,
    new_unit_cube,
    subdivide,
)
from cubecurrents.errors import AxiomViolation, ComplexError


def test_unit_square():
    x = new_unit_cube(2, 5)
    assert len(x.cells) == 1 and len(x.faces) == 4
    assert all(len(f.incident) == 1 for f in x.faces)
    assert x.total_measure == 1
    c = x.cells[0]
    assert (c.weight, c.orientation, x.level) == (1, 1, 0)


def test_unit_cube_3d():
    x = new_unit_cube(3, 5)
    assert len(x.cells) == 1 and len(x.faces) == 6 and x.total_measure == 1


@pytest.mark.parametrize("n, m", [(1, 5), (2, 1)])
def test_unit_cube_rejects_bad_parameters(n, m):
    with pytest.raises(ComplexError):
        new_unit_cube(n, m)


def test_subdivide_square():
    y = subdivide(new_unit_cube(2, 5), 1)
    assert len(y.cells) == 25
    assert all(c.weight == 1 for c in y.cells)
    assert y.total_measure == 1
    assert y.side == Fraction(1, 5)
    assert sum(f.is_boundary for f in y.faces) == 20


def test_subdivide_twice_matches_double_subdivision():
    x = new_unit_cube(2, 3)
    assert subdivide(subdivide(x, 1), 1).same_structure(subdivide(x, 2))


def test_subdivide_iterates_on_branched_complex(system2):
    x1 = system2.complexes[1]
    assert subdivide(subdivide(x1, 1), 1).same_structure(subdivide(x1, 2))


@settings(max_examples=20, deadline=None)
@given(st.lists(st.fractions(min_value=Fraction(1, 10), max_value=10), min_size=4, max_size=4),
       st.integers(min_value=1, max_value=2))
def test_subdivide_preserves_measure(weights, k):
    x = CubeComplex.from_grid_cells(2, 2, 1, [(0, 0), (1, 0), (0, 1), (1, 1)], weights)
    y = subdivide(x, k)
    assert y.total_measure == x.total_measure
    assert len(y.cells) == 4 * 4**k


def test_facet_sign_matches_alternating_convention():
    # 1-based axis alpha: high facet carries (-1)**(alpha + 1)
    for alpha in range(1, 5):
        assert facet_sign(alpha - 1, HIGH) == (-1) ** (alpha + 1)
        assert facet_sign(alpha - 1, LOW) == -((-1) ** (alpha + 1))


def test_link_bound_examples(system2):
    assert link_bound(new_unit_cube(2, 5)) == 1
    assert link_bound(subdivide(new_unit_cube(2, 5), 1)) == 4
    assert link_bound(subdivide(new_unit_cube(3, 5), 1)) == 8
    assert link_bound(system2.complexes[1]) <= 8


def _link_oracle(x: CubeComplex) -> int:
    """Vertices as (cell, corner coordinates) nodes joined when a shared face contains them."""
    g = nx.Graph()
    n = x.n
    for c in x.cells:
        for bits in range(1 << n):
            g.add_node((c.id, tuple(a + (bits >> k & 1) for k, a in enumerate(c.anchor))))
    for f in x.faces:
        cells = [x.cells[c] for c, _ in f.incident]
        for a in cells:
            for b in cells:
                for bits in range(1 << n):
                    p = tuple(v + (bits >> k & 1) for k, v in enumerate(a.anchor))
                    lo, hi = a.anchor[f.axis], a.anchor[f.axis] + 1
                    on_face = p[f.axis] == (hi if (a.id, HIGH) in f.incident else lo)
                    if on_face and (b.id, p) in g:
                        g.add_edge((a.id, p), (b.id, p))
    return max(len({c for c, _ in comp}) for comp in nx.connected_components(g))


def test_link_bound_matches_coordinate_oracle(system2):
    for x in system2.complexes[:3]:
        assert link_bound(x) == _link_oracle(x)


def test_gallery_connectivity_and_diameter():
    res = check_gallery_connected(new_unit_cube(2, 5))
    assert res.passed and res.witness["diameter"] == 0
    y = subdivide(new_unit_cube(2, 5), 1)
    res = check_gallery_connected(y)
    g = nx.Graph()
    g.add_nodes_from(range(len(y.cells)))
    g.add_edges_from((a, b) for a, nb in enumerate(y.adjacency) for b in nb)
    assert res.passed and res.witness["diameter"] == nx.diameter(g) == 8


def test_gallery_diameter_matches_networkx_on_branched(system2):
    x = system2.complexes[2]
    g = nx.Graph()
    g.add_edges_from((a, b) for a, nb in enumerate(x.adjacency) for b in nb)
    assert check_gallery_connected(x).witness["diameter"] == nx.diameter(g)


def test_two_disjoint_cells_not_connected():
    x, _ = CubeComplex.build(2, 5, 1, [((0, 0), (0,), 1), ((3, 3), (0,), 1)])
    assert not check_gallery_connected(x).passed


def test_identity_map_bounds():
    y = subdivide(new_unit_cube(2, 5), 1)
    p = CellMap.identity(y)
    assert fiber_gallery_bound(p) == 1
    res = check_measures(p)
    assert res.passed and res.witness["C_mu"] == "1/1"


def test_disconnected_fiber_raises():
    src, _ = CubeComplex.build(2, 2, 0, [((0, 0), (1,), Fraction(1, 2)), ((0, 0), (2,), Fraction(1, 2))])
    tgt = new_unit_cube(2, 2)
    p = CellMap(src, tgt, [0, 0])
    with pytest.raises(AxiomViolation) as err:
        fiber_gallery_bound(p)
    assert err.value.axiom == "IGall"


def test_perturbed_weight_breaks_pushforward(system2):
    p = system2.maps[0]
    src = p.source.with_weight(0, p.source.cells[0].weight + Fraction(1, 1000))
    res = check_measures(CellMap(src, p.target, p.assignment))
    assert not res.passed and "target_cell" in res.locator


def test_level1_measure_ratio(system2):
    res = check_measures(system2.maps[0])
    assert res.passed and res.witness["C_mu"] == "2/1"


def test_serialization_roundtrip(system2):
    x = system2.complexes[1]
    y = CubeComplex.from_json(x.to_json())
    assert y.same_structure(x)
    assert y.to_json() == x.to_json()
    assert x.to_dict()["cells"][0]["weight"] == "1/1"


def test_cells_sorted_by_anchor_then_label(system2):
    keys = [c.key for c in system2.complexes[2].cells]
    assert keys == sorted(keys)


def test_invalid_gluing_rejected():
    # a face may not join facets lying on different hyperplanes
    with pytest.raises(ComplexError):
        CubeComplex.build(2, 5, 1, [((0, 0), (0,), 1), ((2, 0), (0,), 1)], [(0, [(0, HIGH), (1, LOW)])])


def test_anchor_out_of_range_rejected():
    with pytest.raises(ComplexError):
        CubeComplex.build(2, 5, 0, [((1, 0), (), 1)])


def test_map_requires_anchor_compatibility():
    y = subdivide(new_unit_cube(2, 5), 1)
    with pytest.raises(ComplexError):
        CellMap(y, y, [1] + list(range(1, 25)))
