"""Iterated 2-branched covers of cube complexes.

One step subdivides every cell into ``5**n`` subcells and, in a chosen
coordinate plane, replaces the middle ring of eight subcells (times the
transverse subdivision) by its connected double cover.  The two sheets swap
when crossing from ring index 0 to ring index 7, so the lifted ring is a
16-cycle.  Lifts share the density of their parent subcell equally.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .complex import (
    CellMap,
    CubeComplex,
    check_gallery_connected,
    check_measures,
    fiber_gallery_bound,
    link_bound,
    refine,
    subdivide,
)
from .errors import AxiomViolation, ComplexError
from .report import CheckResult, Report

BRANCH_M = 5
CENTER = (2, 2)
RING = ((1, 1), (2, 1), (3, 1), (3, 2), (3, 3), (2, 3), (1, 3), (1, 2))
SHEET_A, SHEET_B = 1, 2


@dataclass(frozen=True, order=True)
class PlanePair:
    """A coordinate plane, given by 1-based axes ``alpha < beta``."""

    alpha: int
    beta: int

    def __post_init__(self):
        if not 1 <= self.alpha < self.beta:
            raise ComplexError(f"plane pair needs 1 <= alpha < beta, got ({self.alpha}, {self.beta})")

    def check_dim(self, n: int) -> None:
        if self.beta > n:
            raise ComplexError(f"plane ({self.alpha}, {self.beta}) exceeds dimension {n}")

    @property
    def axes(self) -> tuple[int, int]:
        return self.alpha - 1, self.beta - 1

    def to_list(self) -> list[int]:
        return [self.alpha, self.beta]

    @classmethod
    def parse(cls, value) -> "PlanePair":
        if isinstance(value, PlanePair):
            return value
        if isinstance(value, str):
            value = value.strip("()[] ").split(",")
        a, b = (int(v) for v in value)
        return cls(a, b)


def classify_plane_cells(m: int = BRANCH_M) -> dict[str, list[tuple[int, int]]]:
    """Split the ``5 x 5`` plane grid into center, ring (cyclic order) and outer cells."""
    if m != BRANCH_M:
        raise ComplexError(f"the branched cover needs m = {BRANCH_M}, got {m}")
    outer = [(a, b) for a in range(m) for b in range(m) if max(abs(a - 2), abs(b - 2)) == 2]
    return {"center": [CENTER], "ring": list(RING), "outer": outer}


RING_INDEX = {c: k for k, c in enumerate(RING)}


@dataclass(frozen=True)
class RingCover:
    """The connected double cover of the 8-cycle of ring cells.

    Lifted cells are ``(ring index, sheet)``.  Sheets are preserved between
    consecutive indices except across the cut between index 7 and index 0.
    """

    cut: tuple[int, int] = (7, 0)

    @property
    def cells(self) -> list[tuple[int, int]]:
        return [(k, s) for k in range(len(RING)) for s in (SHEET_A, SHEET_B)]

    def project(self, lifted: tuple[int, int]) -> int:
        return lifted[0]

    def step(self, lifted: tuple[int, int], direction: int = 1) -> tuple[int, int]:
        """Move one ring index forward (``+1``) or backward (``-1``)."""
        k, s = lifted
        k2 = (k + direction) % len(RING)
        if {k, k2} == set(self.cut):
            s = SHEET_B if s == SHEET_A else SHEET_A
        return k2, s

    def neighbours(self, lifted: tuple[int, int]) -> list[tuple[int, int]]:
        return [self.step(lifted, 1), self.step(lifted, -1)]


def ring_double_cover() -> RingCover:
    return RingCover()


class _PlaneSplitter:
    """Tells ``refine`` which local subcells double and how sheets pair up."""

    def __init__(self, plane: PlanePair):
        self.a, self.b = plane.axes
        self.cover = RingCover()

    def _plane(self, loc: tuple[int, ...]) -> tuple[int, int]:
        return loc[self.a], loc[self.b]

    def doubled(self, loc: tuple[int, ...]) -> bool:
        return self._plane(loc) in RING_INDEX

    def pair(self, lo: tuple[int, ...], hi: tuple[int, ...], axis: int) -> bool:
        if axis not in (self.a, self.b):
            return False  # transverse neighbours keep their sheet
        k, k2 = RING_INDEX[self._plane(lo)], RING_INDEX[self._plane(hi)]
        return {k, k2} == set(self.cover.cut)


def projection_key(cell) -> tuple:
    """Key in ``X^(1)`` of the image of a cell of the cover."""
    return cell.anchor, cell.label[:-1] + (0,)


def branched_cover(x: CubeComplex, plane: PlanePair) -> tuple[CubeComplex, CellMap, CubeComplex]:
    """One branched-cover step; returns ``(cover, projection, subdivided base)``."""
    if x.m != BRANCH_M:
        raise ComplexError(f"the branched cover needs m = {BRANCH_M}, got {x.m}")
    plane = PlanePair.parse(plane)
    plane.check_dim(x.n)
    for c in x.cells:
        if len(c.label) != x.level:
            raise ComplexError(f"cell {c.id} label does not match level {x.level}")
    y, _ = refine(x, 1, _PlaneSplitter(plane))
    base = subdivide(x, 1)
    pi = CellMap.by_keys(y, base, projection_key)
    return y, pi, base


def composite_key(cell, j: int) -> tuple:
    """Key in ``X_j^(i-j)`` of the image of a level-``i`` cell under the composite map."""
    i = len(cell.label)
    return cell.anchor, cell.label[:j] + (0,) * (i - j)


@dataclass
class InverseSystem:
    complexes: list[CubeComplex]
    maps: list[CellMap]  # maps[i]: X_{i+1} -> X_i^(1)
    schedule: list[PlanePair]
    witnesses: list[dict] = field(default_factory=list)
    _composites: dict = field(default_factory=dict, repr=False)
    _subdivisions: dict = field(default_factory=dict, repr=False)

    @property
    def depth(self) -> int:
        return len(self.complexes) - 1

    @property
    def n(self) -> int:
        return self.complexes[0].n

    @property
    def m(self) -> int:
        return self.complexes[0].m

    def subdivision(self, j: int, k: int) -> CubeComplex:
        """``X_j^(k)``, cached; ``k == 1`` reuses the target of ``maps[j]``."""
        if k == 0:
            return self.complexes[j]
        if k == 1 and j < len(self.maps):
            return self.maps[j].target
        if (j, k) not in self._subdivisions:
            self._subdivisions[j, k] = subdivide(self.complexes[j], k)
        return self._subdivisions[j, k]

    def ancestor(self, i: int, cell_id: int, j: int) -> int:
        """Cell of ``X_j`` under a cell of ``X_i``, walking through the actual projections."""
        for lvl in range(i - 1, j - 1, -1):
            image = self.maps[lvl].target.cells[self.maps[lvl](cell_id)]
            base = self.complexes[lvl]
            cell_id = base.index((tuple(a // base.m for a in image.anchor), image.label[:-1]))
        return cell_id

    def composite(self, i: int, j: int) -> CellMap:
        """``pi_{i,j}: X_i -> X_j^(i-j)``; identity when ``i == j``."""
        if not 0 <= j <= i <= self.depth:
            raise ComplexError(f"composite needs 0 <= j <= i <= depth, got i={i}, j={j}")
        if i == j:
            return CellMap.identity(self.complexes[i])
        if i == j + 1:
            return self.maps[j]
        if (i, j) not in self._composites:
            target = self.subdivision(j, i - j)
            self._composites[i, j] = CellMap.by_keys(
                self.complexes[i], target, lambda c: composite_key(c, j)
            )
        return self._composites[i, j]


def build_system(x0: CubeComplex, schedule: Sequence, depth: int | None = None,
                 *, cycle: bool = False) -> InverseSystem:
    """Apply ``depth`` branched-cover steps following ``schedule``.

    The schedule must list at least ``depth`` planes unless ``cycle`` is set,
    in which case it is repeated in order.
    """
    planes = [PlanePair.parse(p) for p in schedule]
    depth = len(planes) if depth is None else depth
    if depth < 0:
        raise ComplexError("depth must be >= 0")
    if depth > len(planes):
        if not cycle or not planes:
            raise ComplexError(f"schedule has {len(planes)} planes but depth is {depth}")
        planes = [planes[k % len(planes)] for k in range(depth)]
    planes = planes[:depth]
    if x0.m != BRANCH_M and depth > 0:
        raise ComplexError(f"the branched cover needs m = {BRANCH_M}, got {x0.m}")
    if any(c.weight <= 0 for c in x0.cells):
        raise ComplexError("base complex needs positive weights")
    complexes, maps = [x0], []
    for plane in planes:
        y, pi, _ = branched_cover(complexes[-1], plane)
        complexes.append(y)
        maps.append(pi)
    return InverseSystem(complexes, maps, planes)


def subdivision_system(x0: CubeComplex, depth: int) -> InverseSystem:
    """The trivial system of iterated subdivisions with identity projections."""
    complexes, maps = [x0], []
    for _ in range(depth):
        y = subdivide(complexes[-1], 1)
        complexes.append(y)
        maps.append(CellMap.identity(y))
    return InverseSystem(complexes, maps, [])


def check_orientation(p: CellMap) -> CheckResult:
    for s, t in enumerate(p.assignment):
        if p.source.cells[s].orientation != p.target.cells[t].orientation:
            return CheckResult("IOr", False, locator={"level": p.source.level, "cell": s})
    return CheckResult("IOr", True)


def check_open(p: CellMap) -> CheckResult:
    problem = p.structural_problem()
    if problem is not None:
        return CheckResult("IOpen", False, locator={"level": p.source.level}, detail=problem)
    return CheckResult("IOpen", True)


def verify_wais(s: InverseSystem, *, diameter: bool = True) -> Report:
    """Run every axiom checker at every level and collect witnesses."""
    from .currents import check_flux, check_ipoinc

    report = Report()
    s.witnesses = []
    for i, x in enumerate(s.complexes):
        w: dict = {"level": i, "cells": len(x.cells)}
        geo = link_bound(x)
        w["C_geo"] = geo
        report.add(CheckResult("IBGeom", True, witness={"level": i, "C_geo": geo}))
        if diameter:
            conn = check_gallery_connected(x)
        else:
            from .complex import _bfs

            ok = len(_bfs(x.adjacency, 0)) == len(x.cells)
            conn = CheckResult("gallery_connected", ok, locator=None if ok else {"level": i})
        conn.witness["level"] = i
        report.add(conn)
        if i == 0:
            s.witnesses.append(w)
            continue
        p = s.maps[i - 1]
        report.add(check_open(p))
        try:
            gall = fiber_gallery_bound(p)
            report.add(CheckResult("IGall", True, witness={"level": i, "C_gall": gall}))
            w["C_gall"] = gall
        except AxiomViolation as exc:
            report.add(CheckResult("IGall", False, locator=exc.locator, detail=str(exc)))
        meas = check_measures(p)
        meas.witness["level"] = i
        w["C_mu"] = meas.witness.get("C_mu")
        report.add(meas)
        report.add(check_orientation(p))
        report.add(check_flux(p))
        report.add(check_ipoinc(p))
        s.witnesses.append(w)
    return report
