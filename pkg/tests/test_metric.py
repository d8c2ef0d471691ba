from __future__ import annotations

import math

import numpy as np
import pytest

from cubecurrents.branched import build_system, subdivision_system
from cubecurrents.complex import new_unit_cube, subdivide
from cubecurrents.errors import ComplexError
from cubecurrents.metric import (
    FiniteMetricSpace,
    LatticeGraph,
    check_factorization,
    distortion,
    full_distortion,
    sample_metric,
    tap_check,
    tap_result,
    vertex_map,
)


def _octile(pts: np.ndarray) -> np.ndarray:
    """Shortest paths on a square grid with diagonal steps, in closed form."""
    d = np.abs(pts[:, None, :] - pts[None, :, :])
    lo, hi = d.min(axis=2), d.max(axis=2)
    return (hi - lo) + math.sqrt(2) * lo


def test_unit_square_corners():
    fms = sample_metric(new_unit_cube(2, 5), 0)
    assert len(fms) == 4
    assert sorted(np.round(fms.dist[0], 12)) == [0, 1, 1, round(math.sqrt(2), 12)]


@pytest.mark.parametrize("k", [1, 2])
def test_unit_square_matches_octile_oracle(k):
    fms = sample_metric(new_unit_cube(2, 5), k)
    assert len(fms) == (5**k + 1) ** 2
    assert np.allclose(fms.dist, _octile(fms.coords), atol=1e-12)


def test_sampled_metric_is_a_metric(system2):
    fms = sample_metric(system2.complexes[1], 1)
    assert fms.triangle_violation() <= 1e-12
    assert fms.mesh == pytest.approx(1 / 25)


def test_distances_shrink_with_depth():
    coarse = sample_metric(new_unit_cube(2, 5), 0)
    fine = sample_metric(new_unit_cube(2, 5), 1)
    idx = [int(np.flatnonzero(np.all(np.isclose(fine.coords, p), axis=1))[0]) for p in coarse.coords]
    assert np.all(fine.dist[np.ix_(idx, idx)] <= coarse.dist + 1e-12)


def test_lazy_ball_matches_all_pairs(system2):
    x, k = system2.complexes[1], 1
    fms = sample_metric(x, k)
    y = subdivide(x, k)
    g = LatticeGraph(x, k)
    radius = 0.15
    for cell in (0, 5, 12, 20):
        node = g.center(cell)
        c = x.cells[cell]
        fine = y.index((node[0], c.label + (0,) * k))
        v = y.vertex_classes[fine, 0]
        lazy = sorted(g.ball(node, radius).values())
        full = sorted(d for d in fms.dist[v] if d <= radius + 1e-12)
        assert np.allclose(lazy, full, atol=1e-12)


def test_projection_is_one_lipschitz(system2):
    p = system2.maps[0]
    ds = sample_metric(p.source, 1).dist
    dt = sample_metric(p.target, 1).dist
    f = vertex_map(p, 1)
    assert np.all(dt[np.ix_(f, f)] <= ds + 1e-12)


def test_lazy_distortion_is_lower_bound(system2):
    p = system2.maps[0]
    lazy = distortion(p, 1).distortion
    full = full_distortion(p, 1)
    assert lazy <= full + 1e-12
    assert full == pytest.approx(0.16 * math.sqrt(2), abs=1e-9)
    assert lazy == pytest.approx(0.16, abs=1e-9)


def test_identity_has_no_distortion():
    s = subdivision_system(new_unit_cube(2, 5), 2)
    assert distortion(s.maps[1], 1).distortion == 0
    assert full_distortion(s.maps[0], 1) == 0


def test_frozen_distortion_column(system2):
    got = [distortion(system2.maps[i], 2).distortion for i in range(3)]
    assert got == pytest.approx([0.192, 0.0384, 0.00832], rel=1e-9)


def test_distortion_is_seed_deterministic(system2):
    a = distortion(system2.maps[1], 1, seed=5)
    b = distortion(system2.maps[1], 1, seed=5)
    assert a.to_dict() == b.to_dict()


def test_tap_report(system2):
    rep = tap_check(system2, 2, 1)
    assert rep.passed and rep.factorization and rep.monotone
    assert [r["level"] for r in rep.rows] == [0, 1]
    dist = [r["distortion"] for r in rep.rows]
    assert dist[1] < dist[0]
    assert tap_result(rep).passed


def test_tap_single_row():
    s = build_system(new_unit_cube(2, 5), [(1, 2)])
    rep = tap_check(s, 1, 1)
    assert len(rep.rows) == 1 and rep.passed


def test_tap_fails_with_tight_constant(system2):
    rep = tap_check(system2, 2, 1, constant=0.01)
    assert not rep.passed


def test_factorization(system2):
    assert check_factorization(system2, 3)


def test_point_ceiling():
    with pytest.raises(ComplexError):
        sample_metric(new_unit_cube(2, 5), 2, max_points=10)


def test_single_point_space():
    fms = FiniteMetricSpace.single_point()
    assert len(fms) == 1 and fms.triangle_violation() == 0


@pytest.mark.parametrize("dist", [[[0, 1], [2, 0]], [[0, -1], [-1, 0]], [[1, 1], [1, 0]]])
def test_metric_validation(dist):
    with pytest.raises(ComplexError):
        FiniteMetricSpace([0, 1], np.array(dist, dtype=float))
