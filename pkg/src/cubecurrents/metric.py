"""Sampled length metrics on cube complexes and distortion of cellular maps.

The length metric is approximated from above by shortest paths in the graph
whose nodes are the lattice points of the ``k``-fold subdivision and whose
edges join corners of a common subcell, weighted by Euclidean length.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

from .complex import CellMap, CubeComplex, HIGH, LOW, subdivide
from .currents import vertex_coordinates
from .errors import ComplexError
from .report import CheckResult

DEFAULT_MAX_POINTS = 6000


@dataclass
class FiniteMetricSpace:
    labels: list
    dist: np.ndarray
    coords: np.ndarray | None = None
    mesh: Fraction | None = None

    def __post_init__(self):
        self.dist = np.asarray(self.dist, dtype=float)
        k = len(self.labels)
        if self.dist.shape != (k, k):
            raise ComplexError("distance matrix shape does not match the labels")
        if np.any(self.dist < 0) or np.any(np.diag(self.dist) != 0):
            raise ComplexError("distances must be nonnegative with zero diagonal")
        if not np.allclose(self.dist, self.dist.T, rtol=0, atol=1e-12):
            raise ComplexError("distance matrix must be symmetric")

    def __len__(self) -> int:
        return len(self.labels)

    def triangle_violation(self, sample: int | None = None, seed: int = 0) -> float:
        """Largest ``d(a,c) - d(a,b) - d(b,c)`` over all triples (or a sampled set of pivots)."""
        d = self.dist
        pivots = range(len(d))
        if sample is not None and sample < len(d):
            pivots = np.random.default_rng(seed).choice(len(d), sample, replace=False)
        worst = 0.0
        for b in pivots:
            worst = max(worst, float(np.max(d - (d[:, b][:, None] + d[b][None, :]))))
        return worst

    @classmethod
    def single_point(cls) -> "FiniteMetricSpace":
        return cls([0], np.zeros((1, 1)), np.zeros((1, 0)))


def _max_points() -> int:
    import os

    return int(os.environ.get("CUBECURRENTS_MAX_POINTS", DEFAULT_MAX_POINTS))


def sample_metric(x: CubeComplex, k: int = 0, max_points: int | None = None) -> FiniteMetricSpace:
    """All-pairs graph distances between the identified vertices of ``x^(k)``."""
    if k < 0:
        raise ComplexError("sampling depth must be >= 0")
    y = subdivide(x, k)
    limit = _max_points() if max_points is None else max_points
    if y.n_vertices > limit:
        raise ComplexError(f"{y.n_vertices} sample points exceed the ceiling {limit}")
    classes = y.vertex_classes
    nc = 1 << y.n
    h = float(y.side)
    pairs = [(a, b) for a in range(nc) for b in range(a + 1, nc)]
    lengths = np.array([h * math.sqrt(bin(a ^ b).count("1")) for a, b in pairs])
    rows = np.concatenate([classes[:, a] for a, _ in pairs])
    cols = np.concatenate([classes[:, b] for _, b in pairs])
    vals = np.repeat(lengths, len(y.cells))
    nv = y.n_vertices
    # tocsr would sum duplicate edges, so keep one copy of each
    order = np.lexsort((vals, cols, rows))
    r, c, v = rows[order], cols[order], vals[order]
    keep = np.ones(len(r), dtype=bool)
    keep[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
    graph = coo_matrix((v[keep], (r[keep], c[keep])), shape=(nv, nv)).tocsr()
    dist = shortest_path(graph, method="D", directed=False)
    dist = np.minimum(dist, dist.T)
    return FiniteMetricSpace(list(range(nv)), dist, vertex_coordinates(y), y.side)


def vertex_map(p: CellMap, k: int = 0) -> np.ndarray:
    """Image of each vertex of ``source^(k)`` among the vertices of ``target^(k)``."""
    ys, yt = subdivide(p.source, k), subdivide(p.target, k)
    cs, ct = ys.vertex_classes, yt.vertex_classes
    out = np.full(ys.n_vertices, -1, dtype=np.int64)
    for c in ys.cells:
        parent = ys.parent_key(c.id, k)
        image = p.target.cells[p(p.source.index(parent))]
        t = yt.index((c.anchor, image.label + (0,) * k))
        out[cs[c.id]] = ct[t]
    return out


# -- lazy lattice graph ----------------------------------------------------------------


class LatticeGraph:
    """The sampling graph of ``x^(k)`` explored on demand.

    A node is ``(P, c)`` where ``P`` is a global lattice point (integer
    coordinates in units of ``m**-(level + k)``) and ``c`` the smallest id among
    the cells of ``x`` sharing that point through face gluings.
    """

    def __init__(self, x: CubeComplex, k: int):
        self.x = x
        self.r = x.m**k
        self.h = 1.0 / (x.m ** (x.level + k))
        self._comp: dict[tuple, tuple[int, ...]] = {}
        steps = [d for d in product((-1, 0, 1), repeat=x.n) if any(d)]
        self._steps = [(d, self.h * math.sqrt(sum(map(abs, d)))) for d in steps]

    def _local(self, cell: int, P: tuple[int, ...]) -> tuple[int, ...]:
        a = self.x.cells[cell].anchor
        return tuple(p - q * self.r for p, q in zip(P, a))

    def cells_at(self, cell: int, P: tuple[int, ...]) -> tuple[int, ...]:
        key = (P, cell)
        got = self._comp.get(key)
        if got is not None:
            return got
        x, r = self.x, self.r
        seen = {cell}
        todo = [cell]
        while todo:
            c = todo.pop()
            loc = self._local(c, P)
            for axis, v in enumerate(loc):
                if v == 0 or v == r:
                    f = x.faces[x.facet_face(c, axis, LOW if v == 0 else HIGH)]
                    for d, _ in f.incident:
                        if d not in seen:
                            seen.add(d)
                            todo.append(d)
        comp = tuple(sorted(seen))
        for c in comp:
            self._comp[P, c] = comp
        return comp

    def node(self, cell: int, P: tuple[int, ...]) -> tuple:
        return P, self.cells_at(cell, P)[0]

    def center(self, cell: int) -> tuple:
        a = self.x.cells[cell].anchor
        return self.node(cell, tuple(q * self.r + self.r // 2 for q in a))

    def neighbours(self, node: tuple):
        P, c0 = node
        r = self.r
        out: dict[tuple, float] = {}
        for c in self.cells_at(c0, P):
            loc = self._local(c, P)
            for d, length in self._steps:
                if all(0 <= v + e <= r for v, e in zip(loc, d)):
                    Q = tuple(p + e for p, e in zip(P, d))
                    nb = self.node(c, Q)
                    if length < out.get(nb, math.inf):
                        out[nb] = length
        return out.items()

    def ball(self, source: tuple, radius: float) -> dict[tuple, float]:
        """Exact graph distances to every node within ``radius`` of ``source``."""
        dist = {source: 0.0}
        heap = [(0.0, source)]
        done = set()
        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            for v, w in self.neighbours(u):
                nd = d + w
                if nd <= radius + 1e-12 and nd < dist.get(v, math.inf):
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        return dist

    def image(self, node: tuple, p: CellMap, other: "LatticeGraph") -> tuple:
        P, c = node
        return other.node(p(c), P)


@dataclass
class DistortionResult:
    distortion: float
    scale: float
    radius: float
    sources: int
    pairs: int
    worst_pair: tuple | None = None

    @property
    def ratio(self) -> float:
        return self.distortion / self.scale

    def to_dict(self) -> dict:
        return {
            "distortion": self.distortion,
            "ratio": self.ratio,
            "scale": self.scale,
            "radius": self.radius,
            "sources": self.sources,
            "pairs": self.pairs,
        }


def _pick_sources(p: CellMap, samples: int, rng: np.random.Generator) -> list[int]:
    """Target cells whose fibers are sampled: mostly branched fibers plus one plain fiber."""
    multi = [t for t, f in enumerate(p.fibers) if len(f) > 1]
    plain = [t for t, f in enumerate(p.fibers) if len(f) == 1]
    picked: list[int] = []
    if multi:
        picked.extend(int(t) for t in rng.choice(multi, min(samples, len(multi)), replace=False))
    if plain:
        picked.append(int(rng.choice(plain)))
    return sorted(set(picked))


def distortion(p: CellMap, depth: int = 0, *, base_level: int | None = None, radius: float | None = None,
               samples: int = 4, seed: int = 0) -> DistortionResult:
    """Largest ``|d_target(p u, p v) - d_source(u, v)|`` over sampled vertex pairs.

    Sources are the central lattice points of the fiber cells over a seeded
    sample of target cells; partners are every lattice point within ``radius``
    (default half a cell of ``X_base``).  Distances inside that ball are exact
    for the sampling graph.  The reported ratio divides by ``m**-base_level``.
    """
    src, tgt = p.source, p.target
    base = src.level - 1 if base_level is None else base_level
    scale = float(src.m) ** -base
    radius = 0.5 * scale if radius is None else radius
    gs, gt = LatticeGraph(src, depth), LatticeGraph(tgt, depth)
    rng = np.random.default_rng(seed)
    worst, worst_pair, pairs, nsrc = 0.0, None, 0, 0
    for t in _pick_sources(p, samples, rng):
        for cell in p.fibers[t]:
            u = gs.center(cell)
            nsrc += 1
            ds = gs.ball(u, radius)
            dt = gt.ball(gs.image(u, p, gt), radius)
            for v, d in ds.items():
                img = gs.image(v, p, gt)
                gap = abs(dt[img] - d)
                pairs += 1
                if gap > worst:
                    worst, worst_pair = gap, (u, v)
    return DistortionResult(worst, scale, radius, nsrc, pairs, worst_pair)


def full_distortion(p: CellMap, depth: int = 0) -> float:
    """Distortion over all vertex pairs using complete distance matrices (small inputs only)."""
    ds = sample_metric(p.source, depth).dist
    dt = sample_metric(p.target, depth).dist
    f = vertex_map(p, depth)
    return float(np.max(np.abs(dt[np.ix_(f, f)] - ds)))


@dataclass
class TapReport:
    top: int
    rows: list[dict] = field(default_factory=list)
    factorization: bool = True
    monotone: bool = True

    @property
    def passed(self) -> bool:
        return self.factorization and self.monotone and all(r["within_bound"] for r in self.rows)

    def to_dict(self) -> dict:
        return {"top": self.top, "factorization": self.factorization, "monotone": self.monotone,
                "passed": self.passed, "rows": self.rows}


def check_factorization(s, top: int) -> bool:
    """``pi_{top,n} = pi_n o pi_{top,n+1}`` cell by cell, through the actual projections."""
    x = s.complexes[top]
    for n in range(top - 1, -1, -1):
        direct = s.composite(top, n)
        step = s.maps[n]
        for c in range(len(x.cells)):
            via = s.ancestor(top, c, n + 1)
            expected = step.target.cells[step(via)].key
            got = direct.target.parent_key(direct(c), top - n - 1)
            if got != expected:
                return False
    return True


def tap_check(s, top: int | None = None, depth: int = 0, *, samples: int = 3, seed: int = 0,
              constant: float | None = None) -> TapReport:
    """Distortion of each composite ``pi_{top,n}`` against ``C * m**-n``, plus factorization."""
    top = s.depth if top is None else top
    report = TapReport(top)
    report.factorization = check_factorization(s, top)
    results = []
    for n in range(top - 1, -1, -1):
        res = distortion(s.composite(top, n), depth, base_level=n, samples=samples, seed=seed)
        results.append((n, res))
    fitted = max((r.ratio for _, r in results), default=0.0)
    c = fitted if constant is None else constant
    prev = None
    for n, r in sorted(results):
        row = {"level": n, **r.to_dict(), "bound": c * r.scale, "within_bound": r.distortion <= c * r.scale + 1e-12}
        report.rows.append(row)
        if prev is not None and r.distortion > prev + 1e-12:
            report.monotone = False
        prev = r.distortion
    return report


def tap_result(report: TapReport) -> CheckResult:
    locator = None
    if not report.passed:
        bad = [r["level"] for r in report.rows if not r["within_bound"]]
        locator = {"top": report.top, "level": bad[0] if bad else None,
                   "factorization": report.factorization, "monotone": report.monotone}
    return CheckResult("TAP", report.passed, witness=report.to_dict(), locator=locator)
