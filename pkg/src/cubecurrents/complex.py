"""Coordinate-compatible cube complexes and cellular maps between them.

Every cell of a level-``i`` complex is a copy of ``[0, m**-i]**n`` placed at an
integer *anchor* in ``{0, ..., m**i - 1}**n`` (its image position in the unit
cube).  Cells sharing an anchor are told apart by a *label*: a tuple with one
entry per level recording the sheet chosen at that level (``0`` for an
unbranched cell, ``1``/``2`` for the two lifts of a doubled cell).  Gluings are
coordinate-identity isometries, so anchors plus facet incidences describe the
whole complex.

Faces are first-class codimension-1 nodes listing every incident facet; at
branch loci a face carries three or more facets.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import cached_property
from itertools import product
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import AxiomViolation, ComplexError
from .report import CheckResult

LOW, HIGH = 0, 1
SIDE_NAMES = ("low", "high")
FORMAT_VERSION = 1

Key = tuple[tuple[int, ...], tuple[int, ...]]


def frac_str(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


def parse_frac(text: str | int | Fraction) -> Fraction:
    return Fraction(text)


def facet_sign(axis: int, side: int) -> int:
    """Sign of facet (axis, side) in the boundary of a positively oriented cube.

    ``axis`` is 0-based, so the high facet of axis ``a`` carries ``(-1)**a``;
    with 1-based axes this is the usual ``(-1)**(alpha + 1)``.
    """
    s = 1 if axis % 2 == 0 else -1
    return s if side == HIGH else -s


@dataclass(frozen=True, slots=True)
class Cell:
    id: int
    anchor: tuple[int, ...]
    label: tuple[int, ...]
    weight: Fraction
    orientation: int = 1

    @property
    def key(self) -> Key:
        return (self.anchor, self.label)


@dataclass(frozen=True, slots=True)
class Face:
    id: int
    axis: int
    incident: tuple[tuple[int, int], ...]  # (cell id, LOW/HIGH)

    @property
    def is_boundary(self) -> bool:
        """True when every incident facet lies on the same side."""
        return len({side for _, side in self.incident}) == 1


class CubeComplex:
    """An immutable level-``i`` complex of ``n``-cubes with side ``m**-level``."""

    def __init__(
        self,
        n: int,
        m: int,
        level: int,
        cells: Sequence[Cell],
        faces: Sequence[Face],
        *,
        gallery_connected: bool = True,
    ):
        if n < 2:
            raise ComplexError(f"cell dimension must be >= 2, got {n}")
        if m < 2:
            raise ComplexError(f"branching factor must be >= 2, got {m}")
        if level < 0:
            raise ComplexError(f"level must be >= 0, got {level}")
        self.n = n
        self.m = m
        self.level = level
        self.cells = tuple(cells)
        self.faces = tuple(faces)
        self.gallery_connected = gallery_connected
        self._index = {c.key: c.id for c in self.cells}
        if len(self._index) != len(self.cells):
            raise ComplexError("duplicate (anchor, label) keys")
        self._facets = self._attach_facets()
        self._validate()

    # -- construction helpers -------------------------------------------------

    def _attach_facets(self) -> list[int]:
        n2 = 2 * self.n
        table = [-1] * (len(self.cells) * n2)
        for f in self.faces:
            if not f.incident:
                raise ComplexError(f"face {f.id} has no incident facets")
            for c, side in f.incident:
                slot = c * n2 + 2 * f.axis + side
                if table[slot] != -1:
                    raise ComplexError(
                        f"facet (cell {c}, axis {f.axis}, {SIDE_NAMES[side]}) attached twice"
                    )
                table[slot] = f.id
        if -1 in table:
            slot = table.index(-1)
            c, r = divmod(slot, n2)
            raise ComplexError(f"facet (cell {c}, axis {r // 2}, {SIDE_NAMES[r % 2]}) unattached")
        return table

    def _validate(self) -> None:
        top = self.m**self.level
        for pos, c in enumerate(self.cells):
            if c.id != pos:
                raise ComplexError("cell ids must be positional")
            if len(c.anchor) != self.n or any(not 0 <= a < top for a in c.anchor):
                raise ComplexError(f"cell {c.id} anchor {c.anchor} out of range for level {self.level}")
            if c.weight < 0:
                raise ComplexError(f"cell {c.id} has negative weight")
            if c.orientation not in (1, -1):
                raise ComplexError(f"cell {c.id} orientation must be +1 or -1")
        for f in self.faces:
            ref = None
            for c, side in f.incident:
                a = self.cells[c].anchor
                where = (a[f.axis] + side, a[: f.axis] + a[f.axis + 1 :])
                if ref is None:
                    ref = where
                elif where != ref:
                    raise ComplexError(f"face {f.id} glues facets at different coordinates")
        if self.cells and self.total_measure <= 0:
            raise ComplexError("total measure must be positive")

    @classmethod
    def build(
        cls,
        n: int,
        m: int,
        level: int,
        cells: Sequence[tuple],
        gluings: Iterable[tuple[int, Sequence[tuple[int, int]]]] = (),
        *,
        gallery_connected: bool = True,
    ) -> tuple["CubeComplex", list[int]]:
        """Assemble a complex from raw cell specs and explicit gluings.

        ``cells`` holds ``(anchor, label, weight[, orientation])`` tuples and
        ``gluings`` holds ``(axis, [(entry index, side), ...])`` groups.  Facets
        not mentioned in any gluing become boundary faces.  Cells are sorted by
        ``(anchor, label)``; the returned list maps entry index to cell id.
        """
        specs = []
        for entry in cells:
            anchor, label, weight, *rest = entry
            specs.append((tuple(anchor), tuple(label), Fraction(weight), rest[0] if rest else 1))
        order = sorted(range(len(specs)), key=lambda i: (specs[i][0], specs[i][1]))
        new_id = [0] * len(specs)
        for rank, i in enumerate(order):
            new_id[i] = rank
        cell_objs = [Cell(rank, *specs[i]) for rank, i in enumerate(order)]
        raw: list[tuple[int, tuple[tuple[int, int], ...]]] = []
        seen = set()
        for axis, inc in gluings:
            group = tuple(sorted((new_id[c], s) for c, s in inc))
            raw.append((axis, group))
            seen.update((c, axis, s) for c, s in group)
        for c in range(len(cell_objs)):
            for axis in range(n):
                for side in (LOW, HIGH):
                    if (c, axis, side) not in seen:
                        raw.append((axis, ((c, side),)))

        def face_key(f):
            axis, inc = f
            c, side = inc[0]
            a = cell_objs[c].anchor
            return (axis, a[axis] + side, a[:axis] + a[axis + 1 :], inc)

        raw.sort(key=face_key)
        faces = [Face(i, axis, inc) for i, (axis, inc) in enumerate(raw)]
        return cls(n, m, level, cell_objs, faces, gallery_connected=gallery_connected), new_id

    @classmethod
    def from_grid_cells(
        cls,
        n: int,
        m: int,
        level: int,
        anchors: Sequence[Sequence[int]],
        weights: Sequence | None = None,
        label: tuple[int, ...] | None = None,
    ) -> "CubeComplex":
        """Single-sheet complex on the given grid positions, glued wherever cells touch."""
        label = (0,) * level if label is None else label
        weights = [1] * len(anchors) if weights is None else weights
        where = {tuple(a): i for i, a in enumerate(anchors)}
        gluings = []
        for i, a in enumerate(anchors):
            for axis in range(n):
                b = list(a)
                b[axis] += 1
                j = where.get(tuple(b))
                if j is not None:
                    gluings.append((axis, [(i, HIGH), (j, LOW)]))
        cells = [(tuple(a), label, w) for a, w in zip(anchors, weights)]
        x, _ = cls.build(n, m, level, cells, gluings)
        return x

    def with_weight(self, cell_id: int, weight) -> "CubeComplex":
        cells = list(self.cells)
        cells[cell_id] = replace(cells[cell_id], weight=Fraction(weight))
        return CubeComplex(self.n, self.m, self.level, cells, self.faces,
                           gallery_connected=self.gallery_connected)

    def with_orientation(self, cell_id: int, orientation: int) -> "CubeComplex":
        cells = list(self.cells)
        cells[cell_id] = replace(cells[cell_id], orientation=orientation)
        return CubeComplex(self.n, self.m, self.level, cells, self.faces,
                           gallery_connected=self.gallery_connected)

    # -- basic geometry -------------------------------------------------------

    def __len__(self) -> int:
        return len(self.cells)

    def __repr__(self) -> str:
        return (f"CubeComplex(n={self.n}, m={self.m}, level={self.level}, "
                f"cells={len(self.cells)}, faces={len(self.faces)})")

    @property
    def side(self) -> Fraction:
        return Fraction(1, self.m**self.level)

    @property
    def cell_volume(self) -> Fraction:
        return self.side**self.n

    @property
    def face_area(self) -> Fraction:
        return self.side ** (self.n - 1)

    @cached_property
    def total_measure(self) -> Fraction:
        return sum((c.weight for c in self.cells), Fraction(0)) * self.cell_volume

    def measure(self, cell_id: int) -> Fraction:
        return self.cells[cell_id].weight * self.cell_volume

    def index(self, key: Key) -> int:
        return self._index[key]

    def get(self, key: Key) -> int | None:
        return self._index.get(key)

    def facet_face(self, cell_id: int, axis: int, side: int) -> int:
        return self._facets[cell_id * 2 * self.n + 2 * axis + side]

    def face_position(self, face: Face) -> tuple[int, int, tuple[int, ...]]:
        """(axis, hyperplane index, remaining anchor coordinates) of a face."""
        c, side = face.incident[0]
        a = self.cells[c].anchor
        return face.axis, a[face.axis] + side, a[: face.axis] + a[face.axis + 1 :]

    def parent_key(self, cell_id: int, levels: int = 1) -> Key:
        """Key of the ancestor cell ``levels`` subdivisions up."""
        c = self.cells[cell_id]
        if levels == 0:
            return c.key
        q = self.m**levels
        return tuple(a // q for a in c.anchor), c.label[: len(c.label) - levels]

    @cached_property
    def adjacency(self) -> list[list[int]]:
        """Dual graph: cells sharing a face."""
        adj: list[set[int]] = [set() for _ in self.cells]
        for f in self.faces:
            ids = [c for c, _ in f.incident]
            for a in ids:
                for b in ids:
                    if a != b:
                        adj[a].add(b)
        return [sorted(s) for s in adj]

    @cached_property
    def vertex_classes(self) -> np.ndarray:
        """Identified vertex per (cell, corner); corner bit ``a`` is the axis-``a`` offset.

        Corners are merged by union-find closure over facet gluings.
        """
        n, nc = self.n, 1 << self.n
        rows, cols = [], []
        patterns = {}
        for axis in range(n):
            for side in (LOW, HIGH):
                pats = []
                for rest in range(1 << (n - 1)):
                    low = rest & ((1 << axis) - 1)
                    high = (rest >> axis) << (axis + 1)
                    pats.append(low | high | (side << axis))
                patterns[axis, side] = pats
        for f in self.faces:
            if len(f.incident) < 2:
                continue
            c0, s0 = f.incident[0]
            p0 = patterns[f.axis, s0]
            for c, s in f.incident[1:]:
                p = patterns[f.axis, s]
                for k in range(len(p0)):
                    rows.append(c0 * nc + p0[k])
                    cols.append(c * nc + p[k])
        size = len(self.cells) * nc
        graph = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(size, size))
        _, labels = connected_components(graph, directed=False)
        # relabel in first-appearance order so numbering is deterministic
        _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
        rank = np.empty(len(first), dtype=np.int64)
        rank[np.argsort(first)] = np.arange(len(first))
        return rank[inverse].reshape(len(self.cells), nc)

    @property
    def n_vertices(self) -> int:
        return int(self.vertex_classes.max()) + 1 if self.cells else 0

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "n": self.n,
            "m": self.m,
            "level": self.level,
            "gallery_connected": self.gallery_connected,
            "cells": [
                {
                    "id": c.id,
                    "anchor": list(c.anchor),
                    "label": list(c.label),
                    "weight": frac_str(c.weight),
                    "orientation": c.orientation,
                }
                for c in self.cells
            ],
            "faces": [
                {"id": f.id, "axis": f.axis, "incident": [[c, SIDE_NAMES[s]] for c, s in f.incident]}
                for f in self.faces
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "CubeComplex":
        if data.get("version") != FORMAT_VERSION:
            raise ComplexError(f"unsupported complex format version {data.get('version')!r}")
        cells = [
            Cell(c["id"], tuple(c["anchor"]), tuple(c["label"]), parse_frac(c["weight"]), c["orientation"])
            for c in data["cells"]
        ]
        faces = [
            Face(f["id"], f["axis"], tuple((c, SIDE_NAMES.index(s)) for c, s in f["incident"]))
            for f in data["faces"]
        ]
        return cls(data["n"], data["m"], data["level"], cells, faces,
                   gallery_connected=data.get("gallery_connected", True))

    @classmethod
    def from_json(cls, text: str) -> "CubeComplex":
        return cls.from_dict(json.loads(text))

    def same_structure(self, other: "CubeComplex") -> bool:
        """Cell-for-cell and face-for-face equality (ids, anchors, labels, weights, gluings)."""
        return (
            (self.n, self.m, self.level) == (other.n, other.m, other.level)
            and self.cells == other.cells
            and self.faces == other.faces
        )


def new_unit_cube(n: int, m: int) -> CubeComplex:
    if n < 2:
        raise ComplexError(f"dimension must be >= 2, got {n}")
    if m < 2:
        raise ComplexError(f"branching factor must be >= 2, got {m}")
    x, _ = CubeComplex.build(n, m, 0, [((0,) * n, (), 1)])
    return x


# -- refinement ---------------------------------------------------------------


def _insert(seq: tuple[int, ...], axis: int, value: int) -> tuple[int, ...]:
    return seq[:axis] + (value,) + seq[axis:]


def refine(x: CubeComplex, k: int, splitter=None):
    """Subdivide every cell into ``m**k`` pieces per axis, optionally doubling some.

    ``splitter`` (used by the branched-cover construction with ``k == 1``)
    decides, per local position, whether a subcell is doubled and how the two
    sheets pair up across interior faces.  It must provide ``doubled(local)``
    and ``pair(lo_local, hi_local, axis)`` returning ``True`` when sheets swap.

    Returns ``(complex, origin)`` where ``origin[new id] = (old id, local, sheet)``.
    """
    r = x.m**k
    n = x.n
    locs = list(product(range(r), repeat=n))
    specs: list[tuple] = []
    origins: list[tuple] = []
    slots: dict[tuple[int, tuple[int, ...]], tuple[int, ...]] = {}
    plain_suffix = (0,) * k
    for c in x.cells:
        base = tuple(a * r for a in c.anchor)
        for loc in locs:
            anchor = tuple(b + l for b, l in zip(base, loc))
            if splitter is not None and splitter.doubled(loc):
                ids = []
                for sheet in (1, 2):
                    ids.append(len(specs))
                    specs.append((anchor, c.label + (sheet,), c.weight / 2, c.orientation))
                    origins.append((c.id, loc, sheet))
                slots[c.id, loc] = tuple(ids)
            else:
                slots[c.id, loc] = (len(specs),)
                specs.append((anchor, c.label + plain_suffix, c.weight, c.orientation))
                origins.append((c.id, loc, 0))

    gluings: list[tuple[int, list[tuple[int, int]]]] = []
    # subfaces of old faces: every lift over a boundary subcell meets the same face
    for f in x.faces:
        for q in product(range(r), repeat=n - 1):
            inc = []
            for cid, side in f.incident:
                loc = _insert(q, f.axis, 0 if side == LOW else r - 1)
                inc.extend((s, side) for s in slots[cid, loc])
            gluings.append((f.axis, inc))
    # faces interior to an old cell
    for c in x.cells:
        for axis in range(n):
            for loc in locs:
                if loc[axis] == r - 1:
                    continue
                hi_loc = loc[:axis] + (loc[axis] + 1,) + loc[axis + 1 :]
                lo, hi = slots[c.id, loc], slots[c.id, hi_loc]
                if len(lo) == 2 and len(hi) == 2:
                    if splitter.pair(loc, hi_loc, axis):
                        pairs = [(lo[0], hi[1]), (lo[1], hi[0])]
                    else:
                        pairs = [(lo[0], hi[0]), (lo[1], hi[1])]
                    for a, b in pairs:
                        gluings.append((axis, [(a, HIGH), (b, LOW)]))
                else:
                    gluings.append((axis, [(a, HIGH) for a in lo] + [(b, LOW) for b in hi]))

    y, new_id = CubeComplex.build(n, x.m, x.level + k, specs, gluings,
                                  gallery_connected=x.gallery_connected)
    origin: list[tuple] = [None] * len(specs)  # type: ignore[list-item]
    for i, o in enumerate(origins):
        origin[new_id[i]] = o
    return y, origin


def subdivide(x: CubeComplex, k: int = 1) -> CubeComplex:
    """The complex ``x^(k)``: each cell cut into ``m**(k n)`` subcells of equal density."""
    if k < 0:
        raise ComplexError(f"k must be >= 0, got {k}")
    if k == 0:
        return x
    y, _ = refine(x, k)
    return y


# -- cellular maps --------------------------------------------------------------


class CellMap:
    """A cellular map given by a cell-to-cell assignment between equal-level complexes."""

    def __init__(self, source: CubeComplex, target: CubeComplex, assignment: Sequence[int],
                 *, check: bool = True):
        if len(assignment) != len(source.cells):
            raise ComplexError("assignment must cover every source cell")
        self.source = source
        self.target = target
        self.assignment = tuple(assignment)
        if check:
            problem = self.structural_problem()
            if problem is not None:
                raise ComplexError(problem)

    @classmethod
    def by_keys(cls, source: CubeComplex, target: CubeComplex, key_fn, *, check: bool = True) -> "CellMap":
        assignment = []
        for c in source.cells:
            t = target.get(key_fn(c))
            if t is None:
                raise ComplexError(f"no target cell for source cell {c.key}")
            assignment.append(t)
        return cls(source, target, assignment, check=check)

    @classmethod
    def identity(cls, x: CubeComplex) -> "CellMap":
        return cls(x, x, range(len(x.cells)))

    def __call__(self, cell_id: int) -> int:
        return self.assignment[cell_id]

    @cached_property
    def fibers(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.target.cells]
        for s, t in enumerate(self.assignment):
            out[t].append(s)
        return out

    @cached_property
    def face_map(self) -> list[int]:
        """Target face of every source face (derived from facet images)."""
        out = []
        for f in self.source.faces:
            c, side = f.incident[0]
            out.append(self.target.facet_face(self.assignment[c], f.axis, side))
        return out

    @cached_property
    def face_fibers(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.target.faces]
        for s, t in enumerate(self.face_map):
            out[t].append(s)
        return out

    def structural_problem(self) -> str | None:
        """First violation of anchor compatibility, surjectivity or face preservation."""
        src, tgt = self.source, self.target
        if (src.n, src.m, src.level) != (tgt.n, tgt.m, tgt.level):
            return "source and target must share dimension, branching factor and level"
        for s, t in enumerate(self.assignment):
            if src.cells[s].anchor != tgt.cells[t].anchor:
                return f"cell {s} anchor {src.cells[s].anchor} maps to anchor {tgt.cells[t].anchor}"
        hit = set(self.assignment)
        if len(hit) != len(tgt.cells):
            missing = min(set(range(len(tgt.cells))) - hit)
            return f"target cell {missing} not covered"
        for f in src.faces:
            images = {tgt.facet_face(self.assignment[c], f.axis, side) for c, side in f.incident}
            if len(images) != 1:
                return f"source face {f.id} splits across target faces {sorted(images)}"
        return None

    def compose(self, other: "CellMap") -> "CellMap":
        """``other ∘ self`` for maps with matching target/source."""
        if other.source is not self.target:
            raise ComplexError("maps are not composable")
        return CellMap(self.source, other.target, [other.assignment[t] for t in self.assignment])


# -- axiom witnesses ----------------------------------------------------------------


def link_bound(x: CubeComplex) -> int:
    """Largest number of n-cells meeting at one identified vertex."""
    classes = x.vertex_classes
    if classes.size == 0:
        return 0
    cells = np.repeat(np.arange(len(x.cells)), classes.shape[1])
    pairs = np.unique(np.stack([classes.ravel(), cells]), axis=1)
    return int(np.bincount(pairs[0]).max())


def _bfs(adj: list[list[int]], start: int, targets: set[int] | None = None) -> dict[int, int]:
    dist = {start: 0}
    todo = deque([start])
    remaining = set(targets) - {start} if targets else None
    while todo:
        u = todo.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                if remaining is not None:
                    remaining.discard(v)
                    if not remaining:
                        return dist
                todo.append(v)
    return dist


def _diameter(adj: list[list[int]]) -> int:
    """Exact diameter of a connected graph by eccentricity bounds (Takes-Kosters)."""
    n = len(adj)
    if n <= 1:
        return 0
    lower = 0
    upper = [n] * n
    lower_ecc = [0] * n
    candidates = set(range(n))
    pick_high = False
    while candidates:
        if pick_high:
            v = max(candidates, key=lambda u: (upper[u], -u))
        else:
            v = min(candidates, key=lambda u: (lower_ecc[u], u))
        pick_high = not pick_high
        dist = _bfs(adj, v)
        ecc = max(dist.values())
        lower = max(lower, ecc)
        for u in list(candidates):
            d = dist[u]
            lower_ecc[u] = max(lower_ecc[u], ecc - d, d)
            upper[u] = min(upper[u], ecc + d)
            if upper[u] <= lower or (lower_ecc[u] == upper[u] and upper[u] <= lower):
                candidates.discard(u)
        candidates.discard(v)
        if all(upper[u] <= lower for u in candidates):
            break
    return lower


def check_gallery_connected(x: CubeComplex) -> CheckResult:
    adj = x.adjacency
    if not adj:
        return CheckResult("gallery_connected", False, detail="empty complex", locator={"level": x.level})
    reach = _bfs(adj, 0)
    if len(reach) != len(adj):
        missing = min(set(range(len(adj))) - set(reach))
        return CheckResult("gallery_connected", False, witness={"connected": False},
                           locator={"level": x.level, "cell": missing})
    return CheckResult("gallery_connected", True, witness={"connected": True, "diameter": _diameter(adj)})


def fiber_gallery_bound(p: CellMap) -> int:
    """Largest number of cells in a shortest gallery joining two cells of one fiber."""
    adj = p.source.adjacency
    worst = 1
    for t, fiber in enumerate(p.fibers):
        if len(fiber) < 2:
            continue
        for i, a in enumerate(fiber[:-1]):
            others = set(fiber[i + 1 :])
            dist = _bfs(adj, a, others)
            if not others <= dist.keys():
                raise AxiomViolation("IGall", {"level": p.source.level, "target_cell": t,
                                               "cells": sorted(others - dist.keys())[:1] + [a]},
                                     "fiber is not joined by any gallery")
            worst = max(worst, max(dist[b] for b in others) + 1)
    return worst


def check_measures(p: CellMap) -> CheckResult:
    """Exact pushforward of weights plus the adjacent-cell ratio witness C_mu."""
    src, tgt = p.source, p.target
    for t, fiber in enumerate(p.fibers):
        pushed = sum((src.cells[s].weight for s in fiber), Fraction(0))
        if pushed != tgt.cells[t].weight:
            return CheckResult("IMeas", False, locator={"level": tgt.level, "target_cell": t},
                               detail={"pushed": frac_str(pushed), "expected": frac_str(tgt.cells[t].weight)})
    c_mu = Fraction(1)
    for a, nbrs in enumerate(src.adjacency):
        wa = src.cells[a].weight
        for b in nbrs:
            wb = src.cells[b].weight
            if wa > 0:
                c_mu = max(c_mu, wb / wa)
    return CheckResult("IMeas", True, witness={"C_mu": frac_str(c_mu)})
