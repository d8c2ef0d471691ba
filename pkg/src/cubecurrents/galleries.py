"""Maximal axis-galleries and the recursive gallery measures on an inverse system.

A gallery along axis ``a`` is a chain of cells, each stepping from the high
``a``-face of one cell to a cell on the other side of that face.  Maximal
galleries run from ``x_a = 0`` to ``x_a = 1``.  The gallery measures are
nonnegative rational weights on maximal galleries whose sums through each cell
reproduce the cell densities; they are built level by level, splitting the
weight of a projected gallery among its lifts in proportion to cell weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

from .complex import CellMap, CubeComplex, HIGH, LOW, frac_str, subdivide
from .currents import induced_sign
from .errors import ComplexError, GalleryOverflowError
from .report import CheckResult

DEFAULT_MAX_GALLERIES = 250_000


@dataclass(frozen=True)
class Gallery:
    axis: int
    cells: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.cells)


def _across(x: CubeComplex, cell: int, axis: int, side: int) -> list[int]:
    face = x.faces[x.facet_face(cell, axis, side)]
    mine = induced_sign(x, cell, axis, side)
    return sorted(c for c, s in face.incident if induced_sign(x, c, axis, s) == -mine)


def positive_boundary(x: CubeComplex, cell: int, axis: int) -> list[int]:
    """Cells across the high ``axis`` face of ``cell`` (opposite induced orientation)."""
    return _across(x, cell, axis, HIGH)


def negative_boundary(x: CubeComplex, cell: int, axis: int) -> list[int]:
    return _across(x, cell, axis, LOW)


def boundary_measure(x: CubeComplex, cells: list[int]) -> Fraction:
    return sum((x.cells[c].weight for c in cells), Fraction(0)) * x.cell_volume


def _check_axis(x: CubeComplex, axis: int) -> None:
    if not 0 <= axis < x.n:
        raise ComplexError(f"axis must lie in 0..{x.n - 1}, got {axis}")


def count_maximal_galleries(x: CubeComplex, axis: int) -> int:
    _check_axis(x, axis)
    order = sorted(range(len(x.cells)), key=lambda c: -x.cells[c].anchor[axis])
    count = [0] * len(x.cells)
    for c in order:
        nxt = positive_boundary(x, c, axis)
        count[c] = 1 if not nxt else sum(count[d] for d in nxt)
    return sum(count[c] for c in range(len(x.cells)) if not negative_boundary(x, c, axis))


def iter_maximal_galleries(x: CubeComplex, axis: int) -> Iterator[Gallery]:
    _check_axis(x, axis)
    succ = [positive_boundary(x, c, axis) for c in range(len(x.cells))]
    starts = [c for c in range(len(x.cells)) if not negative_boundary(x, c, axis)]
    for s in starts:
        stack = [(s,)]
        while stack:
            path = stack.pop()
            nxt = succ[path[-1]]
            if not nxt:
                yield Gallery(axis, path)
            else:
                stack.extend(path + (d,) for d in reversed(nxt))


def maximal_galleries(x: CubeComplex, axis: int, max_count: int = DEFAULT_MAX_GALLERIES) -> list[Gallery]:
    """All maximal galleries along ``axis`` (0-based), in deterministic DFS order."""
    total = count_maximal_galleries(x, axis)
    if total > max_count:
        raise GalleryOverflowError(
            f"level {x.level} axis {axis} has {total} maximal galleries, above the ceiling {max_count}"
        )
    return list(iter_maximal_galleries(x, axis))


def is_gallery(x: CubeComplex, g: Gallery) -> bool:
    """Checks stepping (consecutive cells meet at the high/low ``axis`` faces) and distinctness."""
    for a, b in zip(g.cells, g.cells[1:]):
        if a == b or x.cells[a].anchor[g.axis] + 1 != x.cells[b].anchor[g.axis]:
            return False
        if x.facet_face(a, g.axis, HIGH) != x.facet_face(b, g.axis, LOW):
            return False
    return True


def is_maximal(x: CubeComplex, g: Gallery) -> bool:
    return (is_gallery(x, g) and not negative_boundary(x, g.cells[0], g.axis)
            and not positive_boundary(x, g.cells[-1], g.axis))


@dataclass
class GalleryMeasure:
    host: CubeComplex
    axis: int
    galleries: list[Gallery]
    values: list[Fraction]
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if len(self.galleries) != len(self.values):
            raise ComplexError("one value per gallery is required")
        self._index = {g.cells: k for k, g in enumerate(self.galleries)}

    @property
    def level(self) -> int:
        return self.host.level

    def __getitem__(self, cells: tuple[int, ...]) -> Fraction:
        return self.values[self._index[cells]]

    def get(self, cells: tuple[int, ...], default=None):
        k = self._index.get(cells)
        return default if k is None else self.values[k]

    def with_value(self, k: int, value) -> "GalleryMeasure":
        vals = list(self.values)
        vals[k] = Fraction(value)
        return GalleryMeasure(self.host, self.axis, self.galleries, vals)

    def histogram(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for v in self.values:
            out[frac_str(v)] = out.get(frac_str(v), 0) + 1
        return dict(sorted(out.items(), key=lambda kv: Fraction(kv[0])))


def flow_measure(x: CubeComplex, axis: int, max_count: int = DEFAULT_MAX_GALLERIES) -> GalleryMeasure:
    """Measure on the galleries of a base complex: start at the first cell's density and
    split proportionally to weights at every step."""
    gals = maximal_galleries(x, axis, max_count)
    vals = []
    for g in gals:
        q = x.cells[g.cells[0]].weight
        for a, b in zip(g.cells, g.cells[1:]):
            nxt = positive_boundary(x, a, axis)
            q *= x.cells[b].weight / sum(x.cells[c].weight for c in nxt)
        vals.append(q)
    return GalleryMeasure(x, axis, gals, vals)


def _collapse(cells) -> tuple:
    out = []
    for c in cells:
        if not out or out[-1] != c:
            out.append(c)
    return tuple(out)


def coarse_gallery(fine: CubeComplex, coarse: CubeComplex, g: Gallery, k: int) -> tuple[int, ...]:
    """The maximal gallery of ``coarse`` containing a gallery of its ``k``-fold subdivision."""
    return _collapse(coarse.index(fine.parent_key(c, k)) for c in g.cells)


def refine_gallery_measure(q: GalleryMeasure, k: int, fine: CubeComplex | None = None) -> GalleryMeasure:
    """Transfer ``q`` to the maximal galleries of the ``k``-fold subdivision of its host."""
    if k == 0:
        return q
    fine = subdivide(q.host, k) if fine is None else fine
    gals = maximal_galleries(fine, q.axis)
    vals = [q[coarse_gallery(fine, q.host, g, k)] for g in gals]
    return GalleryMeasure(fine, q.axis, gals, vals)


def lift_gallery_measure(q: GalleryMeasure, p: CellMap, *, literal: bool = False,
                         max_count: int = DEFAULT_MAX_GALLERIES) -> GalleryMeasure:
    """Gallery measure on the source of ``p: X_{i+1} -> X_i^(1)`` from ``q`` on ``X_i``.

    The projected gallery keeps the value of its coarse parent; the first cell
    scales it by the density ratio to its image, and each later step splits it
    in proportion to the weights of the successors lying over the same image
    cell.  ``literal=True`` splits over all successors instead; the two agree
    whenever no successor set straddles several image cells.
    """
    src, mid = p.source, p.target
    if q.host.level + 1 != mid.level:
        raise ComplexError("gallery measure level does not match the map")
    axis = q.axis
    gals = maximal_galleries(src, axis, max_count)
    weight = [c.weight for c in src.cells]
    succ = [positive_boundary(src, c, axis) for c in range(len(src.cells))]
    split: dict[tuple[int, int], Fraction] = {}
    for a, nxt in enumerate(succ):
        for b in nxt:
            pool = nxt if literal else [c for c in nxt if p(c) == p(b)]
            split[a, b] = weight[b] / sum(weight[c] for c in pool)
    parent = [q.host.index(mid.parent_key(c, 1)) for c in range(len(mid.cells))]
    vals = []
    for g in gals:
        image = Gallery(axis, tuple(p(c) for c in g.cells))
        if not is_maximal(mid, image):
            raise ComplexError(f"projection of gallery {g.cells} is not maximal")
        val = q[_collapse(parent[c] for c in image.cells)]
        first = g.cells[0]
        val *= weight[first] / mid.cells[p(first)].weight
        for a, b in zip(g.cells, g.cells[1:]):
            val *= split[a, b]
        vals.append(val)
    return GalleryMeasure(src, axis, gals, vals)


def gallery_measure(s, level: int, axis: int, *, literal: bool = False,
                    max_count: int = DEFAULT_MAX_GALLERIES) -> GalleryMeasure:
    """The measure ``Q_level`` along ``axis`` (0-based) of an inverse system."""
    if not 0 <= level <= s.depth:
        raise ComplexError(f"level {level} not built")
    q = flow_measure(s.complexes[0], axis, max_count)
    for i in range(level):
        q = lift_gallery_measure(q, s.maps[i], literal=literal, max_count=max_count)
    return q


def verify_decomposition(q: GalleryMeasure, x: CubeComplex | None = None) -> CheckResult:
    """Sum of ``Q`` over galleries through each cell equals the cell's density; total
    ``Q``-weighted gallery volume equals the total measure."""
    x = q.host if x is None else x
    through = [Fraction(0)] * len(x.cells)
    total = Fraction(0)
    for g, v in zip(q.galleries, q.values):
        if v < 0:
            return CheckResult("decomposition", False, locator={"level": x.level, "gallery": list(g.cells)},
                               detail="negative value")
        for c in g.cells:
            through[c] += v
        total += v * len(g.cells) * x.cell_volume
    for c, cell in enumerate(x.cells):
        if through[c] != cell.weight:
            return CheckResult("decomposition", False,
                               locator={"level": x.level, "axis": q.axis, "cell": c},
                               detail={"sum": frac_str(through[c]), "weight": frac_str(cell.weight)})
    if total != x.total_measure:
        return CheckResult("decomposition", False, locator={"level": x.level, "axis": q.axis},
                           detail={"total": frac_str(total)})
    return CheckResult("decomposition", True,
                       witness={"level": x.level, "axis": q.axis, "galleries": len(q.galleries)})


def check_pushforward_measure(q_next: GalleryMeasure, q: GalleryMeasure, p: CellMap) -> CheckResult:
    """Summing ``Q_{i+1}`` over the galleries projecting to each gallery of ``X_i^(1)``
    reproduces the refined ``Q_i``."""
    mid = p.target
    refined = refine_gallery_measure(q, 1, mid)
    pushed: dict[tuple, Fraction] = {}
    for g, v in zip(q_next.galleries, q_next.values):
        image = tuple(p(c) for c in g.cells)
        pushed[image] = pushed.get(image, Fraction(0)) + v
    for g, v in zip(refined.galleries, refined.values):
        got = pushed.pop(g.cells, Fraction(0))
        if got != v:
            return CheckResult("gallery_pushforward", False,
                               locator={"level": mid.level, "axis": q.axis, "gallery": list(g.cells)},
                               detail={"pushed": frac_str(got), "expected": frac_str(v)})
    if pushed:
        stray = next(iter(pushed))
        return CheckResult("gallery_pushforward", False,
                           locator={"level": mid.level, "axis": q.axis, "gallery": list(stray)},
                           detail="image is not a maximal gallery")
    return CheckResult("gallery_pushforward", True,
                       witness={"level": mid.level, "axis": q.axis, "galleries": len(refined.galleries)})
