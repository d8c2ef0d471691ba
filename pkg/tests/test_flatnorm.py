from __future__ import annotations

from itertools import product
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cubecurrents.errors import ComplexError
from cubecurrents.flatnorm import (
    GridChain,
    GridComplex,
    average_down,
    cubical_approximation,
    flat_norm,
    rasterize,
    rotated_square,
    top_chain,
    top_values,
    upsample,
)


def _brute_flat(t: GridChain, span: int = 2) -> float:
    """Minimum over integer 2-chains with coefficients in ``-span..span``."""
    g = t.grid
    b = g.boundary_matrix(2).toarray()
    h = g.side
    best = np.inf
    for s2 in product(range(-span, span + 1), repeat=g.count(2)):
        s2 = np.array(s2, dtype=float)
        s1 = t.coeffs - b @ s2
        best = min(best, np.abs(s1).sum() * h + np.abs(s2).sum() * h * h)
    return best


def chains(d: int, res: int, k: int):
    g = GridComplex(d, res)
    n = g.count(k)
    return st.lists(st.integers(-3, 3), min_size=n, max_size=n).map(lambda c: GridChain(g, k, c))


@pytest.mark.parametrize("d, res", [(1, 4), (2, 3), (3, 2)])
def test_counts(d, res):
    g = GridComplex(d, res)
    for k in range(d + 1):
        assert g.count(k) == comb(d, k) * res**k * (res + 1) ** (d - k)


def test_index_roundtrip():
    g = GridComplex(3, 2)
    for k in range(4):
        for idx in range(g.count(k)):
            pos, axes = g.cell(k, idx)
            assert g.index(pos, axes) == idx


def test_square_boundary():
    g = GridComplex(2, 8)
    q = GridChain.from_entries(g, 2, {g.top_index((3, 4)): 1.0})
    b = q.boundary()
    assert b.mass() == pytest.approx(0.5)
    assert flat_norm(b).value == pytest.approx(1 / 64, abs=1e-9)
    assert flat_norm(GridChain.zero(g, 1)).value == 0


def test_full_square_boundary_mass():
    g = GridComplex(2, 4)
    t = top_chain(g, np.ones((4, 4)))
    assert t.boundary().mass() == pytest.approx(4)
    assert t.mass() == pytest.approx(1)


def test_top_dimensional_flat_is_mass():
    g = GridComplex(2, 4)
    t = top_chain(g, np.arange(16.0) - 8)
    assert flat_norm(t).value == t.mass()


def test_matches_brute_force_on_small_grid():
    g = GridComplex(2, 2)
    rng = np.random.default_rng(1)
    for _ in range(12):
        t = GridChain(g, 1, rng.integers(-1, 2, size=g.count(1)))
        assert flat_norm(t).value == pytest.approx(_brute_flat(t), abs=1e-9)


def test_tiny_coefficients_survive_solver_tolerance():
    g = GridComplex(2, 3)
    coeffs = np.zeros(g.count(1))
    coeffs[-2:] = [1, 3]
    t = GridChain(g, 1, coeffs)
    assert flat_norm(t * 1e-9).value == pytest.approx(1e-9 * flat_norm(t).value, rel=1e-9)


def test_decomposition_is_returned():
    g = GridComplex(2, 4)
    rng = np.random.default_rng(4)
    t = GridChain(g, 1, rng.integers(-2, 3, size=g.count(1)))
    value, s1, s2 = flat_norm(t)
    assert np.allclose((s1 + s2.boundary()).coeffs, t.coeffs, atol=1e-9)
    assert value == pytest.approx(s1.mass() + s2.mass(), abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(chains(2, 3, 2))
def test_boundary_squares_to_zero_2d(t):
    assert not np.any(t.boundary().boundary().coeffs)


@settings(max_examples=25, deadline=None)
@given(st.one_of(chains(3, 2, 2), chains(3, 2, 3)))
def test_boundary_squares_to_zero_3d(t):
    assert not np.any(t.boundary().boundary().coeffs)


@settings(max_examples=25, deadline=None)
@given(chains(2, 3, 1), chains(2, 3, 1), st.floats(-3, 3))
def test_flat_norm_properties(a, b, c):
    fa, fb = flat_norm(a).value, flat_norm(b).value
    assert flat_norm(a + b).value <= fa + fb + 1e-9
    assert fa <= a.mass() + 1e-9
    assert flat_norm(a * c).value == pytest.approx(abs(c) * fa, abs=1e-9)


@settings(max_examples=15, deadline=None)
@given(chains(2, 3, 2))
def test_flat_of_boundary_below_filling_mass(s):
    assert flat_norm(s.boundary()).value <= s.mass() + 1e-9


def test_rotated_square_raster():
    t = rasterize(rotated_square(), GridComplex(2, 16))
    assert t.mass() == pytest.approx(0.5, abs=1e-12)
    assert t.coeffs.min() >= 0 and t.coeffs.max() <= 1


def test_box_and_callable_rasters_agree():
    g = GridComplex(2, 4)
    boxes = rasterize([((0.25, 0.0), (0.75, 0.5))], g)
    func = rasterize(lambda p: ((p[:, 0] > 0.25) & (p[:, 0] < 0.75) & (p[:, 1] < 0.5)).astype(float), g)
    assert np.allclose(boxes.coeffs, func.coeffs)
    assert boxes.mass() == pytest.approx(0.25)


def test_average_and_upsample():
    fine = GridComplex(2, 8)
    rng = np.random.default_rng(0)
    t = top_chain(fine, rng.uniform(0, 1, (8, 8)))
    coarse = average_down(t, GridComplex(2, 2))
    assert coarse.mass() == pytest.approx(t.mass())
    back = upsample(coarse, fine)
    assert np.allclose(average_down(back, GridComplex(2, 2)).coeffs, coarse.coeffs)
    with pytest.raises(ComplexError):
        average_down(t, GridComplex(2, 3))


def test_cubical_approximation_frozen():
    t = rasterize(rotated_square(), GridComplex(2, 64))
    rows = [cubical_approximation(t, GridComplex(2, 2**k))[1] for k in (2, 3, 4, 5)]
    assert [r.flat_distance for r in rows] == pytest.approx([0.234375, 0.109375, 0.046875, 0.015625], abs=1e-9)
    assert rows[0].normal_mass == pytest.approx(4.4375)
    assert all(r.passed for r in rows)


def test_cubical_approximation_eps():
    t = rasterize(rotated_square(), GridComplex(2, 16))
    _, cert = cubical_approximation(t, GridComplex(2, 4), eps=1e-6, boundary_flat=True)
    assert not cert.flat_ok and not cert.passed
    assert cert.boundary_flat_distance is not None and cert.boundary_flat_distance >= 0


def test_chain_roundtrip():
    g = GridComplex(2, 4)
    t = GridChain.from_entries(g, 1, {3: 2.0, 7: -1.5})
    back = GridChain.from_dict(t.to_dict())
    assert back.grid == g and np.array_equal(back.coeffs, t.coeffs)
    assert list(t.support) == [3, 7]
    assert top_values(top_chain(g, np.eye(4))).shape == (4, 4)


def test_invalid_chains():
    g = GridComplex(2, 2)
    with pytest.raises(ComplexError):
        GridChain(g, 3, [])
    with pytest.raises(ComplexError):
        GridChain(g, 1, [1.0])
    with pytest.raises(ComplexError):
        GridChain.zero(g, 0).boundary()
    with pytest.raises(ComplexError):
        GridChain.zero(g, 1) + GridChain.zero(g, 2)
