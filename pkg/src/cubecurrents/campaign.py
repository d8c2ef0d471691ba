"""Configuration-driven verification campaigns, system storage and geometry export."""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .branched import (
    BRANCH_M,
    InverseSystem,
    PlanePair,
    build_system,
    projection_key,
    verify_wais,
)
from .complex import CellMap, CubeComplex, new_unit_cube, subdivide
from .currents import conservation_report, vertex_coordinates
from .errors import CertificateError, ComplexError
from .report import CheckResult, Report, jsonable

DEFAULT_MAX_CELLS = 2_000_000
CHECKS = ("wais", "conservation", "galleries", "metric", "tap", "polyapprox", "flatnorm", "cubapprox")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def max_cells() -> int:
    return int(os.environ.get("CUBECURRENTS_MAX_CELLS", DEFAULT_MAX_CELLS))


@dataclass
class CampaignConfig:
    schedule: list[list[int]]
    n: int = 2
    m: int = BRANCH_M
    depth: int = 3
    cycle_schedule: bool = False
    checks: list[str] = field(default_factory=lambda: list(CHECKS))
    gallery_axes: list[int] = field(default_factory=lambda: [1, 2])
    gallery_levels: list[int] = field(default_factory=lambda: [0, 1, 2])
    conservation_u: dict | None = None  # {"level": j, "cells": [...]}
    metric: dict = field(default_factory=lambda: {"depth": 2, "levels": [1, 2, 3], "samples": 4})
    tap: dict = field(default_factory=lambda: {"top": 2, "depth": 1})
    polyapprox: dict = field(default_factory=lambda: {"level": 2, "scale": "1/25", "depth": 0})
    flatnorm: dict = field(default_factory=lambda: {"resolution": 8, "random_chains": 100, "support": 6})
    cubapprox: dict = field(default_factory=lambda: {"fine": 6, "coarse": [2, 3, 4, 5], "eps": None})
    output: str | None = None
    limits: dict = field(default_factory=lambda: {"max_cells": None, "max_galleries": 250_000})
    seed: int = 0
    inject_unhalved_weight: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignConfig":
        if not isinstance(data, dict):
            raise ConfigError("$", "config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown field")
        if "schedule" not in data:
            raise ConfigError("schedule", "an explicit plane schedule is required")
        defaults = cls(schedule=[])
        merged = {}
        for key in known:
            if key not in data:
                continue
            value = data[key]
            default = getattr(defaults, key)
            if isinstance(default, dict) and isinstance(value, dict):
                value = {**default, **value}
            merged[key] = value
        cfg = cls(**merged)
        # level-dependent defaults follow the requested depth
        if "gallery_levels" not in data:
            cfg.gallery_levels = [lvl for lvl in cfg.gallery_levels if lvl <= cfg.depth]
        if "levels" not in data.get("metric", {}):
            cfg.metric["levels"] = [lvl for lvl in cfg.metric["levels"] if lvl <= cfg.depth]
        if "top" not in data.get("tap", {}):
            cfg.tap["top"] = min(cfg.tap["top"], cfg.depth)
        if "level" not in data.get("polyapprox", {}):
            cfg.polyapprox["level"] = min(cfg.polyapprox["level"], cfg.depth)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "CampaignConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        def need(cond, path, msg):
            if not cond:
                raise ConfigError(path, msg)

        need(isinstance(self.n, int) and self.n >= 2, "n", "must be an integer >= 2")
        need(self.m == BRANCH_M, "m", f"the branched construction needs m = {BRANCH_M}")
        need(isinstance(self.depth, int) and self.depth >= 0, "depth", "must be an integer >= 0")
        need(isinstance(self.schedule, list), "schedule", "must be a list of [alpha, beta] pairs")
        for k, pair in enumerate(self.schedule):
            try:
                PlanePair.parse(pair).check_dim(self.n)
            except (ComplexError, TypeError, ValueError) as exc:
                raise ConfigError(f"schedule[{k}]", str(exc)) from None
        if self.depth > len(self.schedule):
            need(self.cycle_schedule and self.schedule, "schedule",
                 f"lists {len(self.schedule)} planes for depth {self.depth}; set cycle_schedule to repeat it")
        for k, c in enumerate(self.checks):
            need(c in CHECKS, f"checks[{k}]", f"unknown check {c!r}; expected one of {', '.join(CHECKS)}")
        for k, a in enumerate(self.gallery_axes):
            need(isinstance(a, int) and 1 <= a <= self.n, f"gallery_axes[{k}]", f"must lie in 1..{self.n}")
        for k, lvl in enumerate(self.gallery_levels):
            need(isinstance(lvl, int) and 0 <= lvl <= self.depth, f"gallery_levels[{k}]", "must be a built level")
        if self.conservation_u is not None:
            need(isinstance(self.conservation_u, dict) and "level" in self.conservation_u
                 and "cells" in self.conservation_u, "conservation_u", "needs 'level' and 'cells'")
            need(0 <= self.conservation_u["level"] <= self.depth, "conservation_u.level", "must be a built level")
        need(self.metric.get("depth", 0) >= 0, "metric.depth", "must be >= 0")
        for k, lvl in enumerate(self.metric.get("levels", [])):
            need(isinstance(lvl, int) and 1 <= lvl <= self.depth, f"metric.levels[{k}]", "must lie in 1..depth")
        need(self.metric.get("samples", 1) > 0, "metric.samples", "must be positive")
        need(0 <= self.tap.get("top", 0) <= self.depth, "tap.top", "must be a built level")
        need(self.tap.get("depth", 0) >= 0, "tap.depth", "must be >= 0")
        need(0 <= self.polyapprox.get("level", 0) <= self.depth, "polyapprox.level", "must be a built level")
        try:
            need(Fraction(str(self.polyapprox.get("scale", "1/25"))) > 0, "polyapprox.scale", "must be positive")
        except (ValueError, ZeroDivisionError):
            raise ConfigError("polyapprox.scale", "must be a positive rational") from None
        need(self.flatnorm.get("resolution", 1) >= 1, "flatnorm.resolution", "must be positive")
        need(self.flatnorm.get("random_chains", 0) >= 0, "flatnorm.random_chains", "must be >= 0")
        fine = self.cubapprox.get("fine", 6)
        need(isinstance(fine, int) and fine >= 1, "cubapprox.fine", "must be a positive exponent")
        for k, c in enumerate(self.cubapprox.get("coarse", [])):
            need(isinstance(c, int) and 0 <= c <= fine, f"cubapprox.coarse[{k}]", "must lie in 0..fine")
        for key, value in self.limits.items():
            need(value is None or (isinstance(value, int) and value > 0), f"limits.{key}", "must be positive")


def predicted_cells(n: int, depth: int) -> list[int]:
    growth = 5**n + 8 * 5 ** (n - 2)
    return [growth**i for i in range(depth + 1)]


def build_from_config(cfg: CampaignConfig) -> InverseSystem:
    limit = cfg.limits.get("max_cells") or max_cells()
    counts = predicted_cells(cfg.n, cfg.depth)
    if counts[-1] > limit:
        raise ComplexError(f"depth {cfg.depth} would need {counts[-1]} cells, above the ceiling {limit}")
    return build_system(new_unit_cube(cfg.n, cfg.m), cfg.schedule, cfg.depth, cycle=cfg.cycle_schedule)


def inject_unhalved_weight(s: InverseSystem) -> tuple[int, int]:
    """Double the weight of the first doubled-sheet cell at the top level (undoing its halving)."""
    lvl = s.depth
    if lvl == 0:
        raise ComplexError("nothing to corrupt at depth 0")
    x = s.complexes[lvl]
    cell = next(c for c in x.cells if c.label[-1] != 0)
    y = x.with_weight(cell.id, cell.weight * 2)
    s.complexes[lvl] = y
    s.maps[lvl - 1] = CellMap(y, s.maps[lvl - 1].target, s.maps[lvl - 1].assignment)
    s._composites.clear()
    return lvl, cell.id


# -- storage --------------------------------------------------------------------------


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(jsonable(obj), sort_keys=True, indent=1) + "\n")


def save_system(s: InverseSystem, out: str | Path) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for i, x in enumerate(s.complexes):
        (out / f"level_{i}.json").write_text(x.to_json() + "\n")
    manifest = {
        "n": s.n,
        "m": s.m,
        "depth": s.depth,
        "schedule": [p.to_list() for p in s.schedule],
        "levels": [f"level_{i}.json" for i in range(len(s.complexes))],
        "witnesses": s.witnesses,
    }
    _dump(manifest, out / "manifest.json")
    return out


def load_system(path: str | Path) -> InverseSystem:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    complexes = [CubeComplex.from_json((path / name).read_text()) for name in manifest["levels"]]
    maps = []
    for i in range(len(complexes) - 1):
        maps.append(CellMap.by_keys(complexes[i + 1], subdivide(complexes[i], 1), projection_key))
    s = InverseSystem(complexes, maps, [PlanePair.parse(p) for p in manifest["schedule"]])
    s.witnesses = manifest.get("witnesses", [])
    return s


# -- geometry export ----------------------------------------------------------------------------


def edge_classes(x: CubeComplex) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Identified edges per (cell, axis, corner-of-other-axes), and the local edge list.

    Local edge ``e`` of a cell joins corners ``lo`` and ``lo | (1 << axis)``.
    """
    n = x.n
    local = [(a, lo) for a in range(n) for lo in range(1 << n) if not lo >> a & 1]
    where = {e: k for k, e in enumerate(local)}
    ne = len(local)
    rows, cols = [], []
    for f in x.faces:
        if len(f.incident) < 2:
            continue
        c0, s0 = f.incident[0]
        on_face = [(a, lo) for a, lo in local if a != f.axis]
        for c, s in f.incident[1:]:
            for a, lo in on_face:
                if (lo >> f.axis & 1) != s0:
                    continue
                other = lo ^ ((s0 ^ s) << f.axis)
                rows.append(c0 * ne + where[a, lo])
                cols.append(c * ne + where[a, other])
    size = len(x.cells) * ne
    graph = coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(size, size))
    _, labels = connected_components(graph, directed=False)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(len(first))
    return rank[inverse].reshape(len(x.cells), ne), local


def export_geometry(x: CubeComplex) -> dict:
    """Identified vertices, edges and (for ``n == 2``) square faces, in a deterministic order."""
    vc = x.vertex_classes
    coords = vertex_coordinates(x)
    owner = np.full(x.n_vertices, -1)
    for c in range(len(x.cells) - 1, -1, -1):
        owner[vc[c]] = c
    denom = x.m**x.level
    vertices = []
    for v in range(x.n_vertices):
        cell = x.cells[int(owner[v])]
        vertices.append({
            "id": v,
            "coords": [float(t) for t in coords[v]],
            "exact": [f"{int(round(t * denom))}/{denom}" for t in coords[v]],
            "label": list(cell.label),
        })
    ec, local = edge_classes(x)
    edges: dict[int, list[int]] = {}
    for c in range(len(x.cells)):
        for k, (a, lo) in enumerate(local):
            e = int(ec[c, k])
            if e not in edges:
                edges[e] = [int(vc[c, lo]), int(vc[c, lo | 1 << a])]
    out = {
        "n": x.n,
        "m": x.m,
        "level": x.level,
        "vertices": vertices,
        "edges": [{"id": e, "vertices": edges[e]} for e in sorted(edges)],
    }
    if x.n == 2:
        out["faces"] = [
            {"cell": c.id, "label": list(c.label), "weight": f"{c.weight.numerator}/{c.weight.denominator}",
             "vertices": [int(vc[c.id, k]) for k in (0, 1, 3, 2)]}
            for c in x.cells
        ]
    return out


def export_geometry_json(x: CubeComplex) -> str:
    return json.dumps(export_geometry(x), sort_keys=True, separators=(",", ":")) + "\n"


# -- campaign ---------------------------------------------------------------------------------


def _random_grid_chain(grid, k: int, support: int, rng: np.random.Generator):
    from .flatnorm import GridChain

    ids = rng.choice(grid.count(k), size=min(support, grid.count(k)), replace=False)
    return GridChain.from_entries(grid, k, {int(i): float(rng.integers(-3, 4)) or 1.0 for i in ids})


def _flat_check(name: str, ok: bool, witness: dict, trial: int | None = None) -> CheckResult:
    return CheckResult(name, ok, witness=witness, locator=None if ok else {"experiment": name, "trial": trial})


def flatnorm_checks(cfg: dict, seed: int) -> list[CheckResult]:
    from .flatnorm import GridChain, GridComplex, flat_norm

    res = cfg.get("resolution", 8)
    g = GridComplex(2, res)
    out = []
    q = GridChain.from_entries(g, 2, {g.top_index((0, 0)): 1.0})
    val = flat_norm(q.boundary()).value
    side = 1 / res
    expected = min(4 * side, side * side)
    out.append(_flat_check("flat_square_boundary", abs(val - expected) <= 1e-9,
                           {"value": val, "expected": expected}))
    zero = flat_norm(GridChain.zero(g, 1)).value
    out.append(_flat_check("flat_zero", zero == 0, {"value": zero}))
    rng = np.random.default_rng(seed)
    worst_tri, worst_mass = -np.inf, -np.inf
    tri_at = mass_at = None
    for trial in range(cfg.get("random_chains", 100)):
        k = int(rng.integers(0, 2))
        a = _random_grid_chain(g, k, cfg.get("support", 6), rng)
        b = _random_grid_chain(g, k, cfg.get("support", 6), rng)
        fa, fb, fab = flat_norm(a).value, flat_norm(b).value, flat_norm(a + b).value
        if fab - fa - fb > worst_tri:
            worst_tri, tri_at = fab - fa - fb, trial
        if max(fa - a.mass(), fb - b.mass()) > worst_mass:
            worst_mass, mass_at = max(fa - a.mass(), fb - b.mass()), trial
    out.append(_flat_check("flat_triangle", worst_tri <= 1e-9, {"worst_excess": float(worst_tri)}, tri_at))
    out.append(_flat_check("flat_below_mass", worst_mass <= 1e-9, {"worst_excess": float(worst_mass)}, mass_at))
    return out


def cubapprox_checks(cfg: dict) -> list[CheckResult]:
    from .flatnorm import GridComplex, cubical_approximation, rasterize, rotated_square

    fine = GridComplex(2, 2 ** cfg.get("fine", 6))
    t = rasterize(rotated_square(), fine)
    rows, prev, bad = [], None, None
    for k in sorted(cfg.get("coarse", [2, 3, 4, 5])):
        _, cert = cubical_approximation(t, GridComplex(2, 2**k), eps=cfg.get("eps"))
        rows.append({"k": k, **cert.to_dict()})
        if bad is None and not (cert.passed and (prev is None or cert.flat_distance < prev)):
            bad = k
        prev = cert.flat_distance
    return [CheckResult("cubical_approximation", bad is None, witness={"rows": rows},
                        locator=None if bad is None else {"k": bad})]


def run(cfg: CampaignConfig, out: str | Path | None = None) -> tuple[Report, dict]:
    """Execute the configured pipeline; returns the report and per-stage timings."""
    from .galleries import check_pushforward_measure, gallery_measure, verify_decomposition
    from .metric import distortion, sample_metric, tap_check, tap_result
    from .nagata import nagata_cover_grid, poly_approx

    report = Report()
    timings: dict[str, float] = {}
    clock = time.perf_counter()

    def lap(name):
        nonlocal clock
        now = time.perf_counter()
        timings[name] = round(now - clock, 3)
        clock = now

    s = build_from_config(cfg)
    if cfg.inject_unhalved_weight:
        lvl, cell = inject_unhalved_weight(s)
        report.add(CheckResult("injected_fault", True, witness={"level": lvl, "cell": cell}))
    report.add(CheckResult("build", True, witness={
        "schedule": [p.to_list() for p in s.schedule],
        "cells": [len(x.cells) for x in s.complexes],
    }))
    lap("build")
    checks = set(cfg.checks)
    if "wais" in checks:
        report.extend(verify_wais(s).checks)
        lap("wais")
    if "conservation" in checks:
        u = cfg.conservation_u or {}
        report.add(conservation_report(s, u.get("level"), u.get("cells")).to_check())
        lap("conservation")
    if "galleries" in checks:
        maxg = cfg.limits.get("max_galleries") or 250_000
        for a in cfg.gallery_axes:
            prev = None
            for lvl in sorted(cfg.gallery_levels):
                q = gallery_measure(s, lvl, a - 1, max_count=maxg)
                res = verify_decomposition(q)
                res.witness["histogram"] = q.histogram()
                report.add(res)
                if lvl > 0:
                    prev = prev if prev is not None and prev.level == lvl - 1 else gallery_measure(s, lvl - 1, a - 1, max_count=maxg)
                    report.add(check_pushforward_measure(q, prev, s.maps[lvl - 1]))
                prev = q
        lap("galleries")
    if "metric" in checks:
        rows = []
        for lvl in cfg.metric.get("levels", []):
            r = distortion(s.maps[lvl - 1], cfg.metric.get("depth", 2), samples=cfg.metric.get("samples", 4),
                           seed=cfg.seed)
            rows.append({"level": lvl, **r.to_dict()})
        bad = None
        for a, b in zip(rows, rows[1:]):
            if bad is None and not (b["distortion"] > 0 and a["distortion"] / b["distortion"] >= 4):
                bad = {"level": b["level"]}
        ratios = [r["ratio"] for r in rows]
        if bad is None and ratios and not (min(ratios) > 0 and max(ratios) / min(ratios) - 1 < 0.5):
            bad = {"levels": [r["level"] for r in rows], "spread": "fitted constant"}
        report.add(CheckResult("distortion_decay", bad is None, witness={"rows": rows}, locator=bad))
        lap("metric")
    if "tap" in checks and s.depth > 0:
        tr = tap_check(s, cfg.tap.get("top", s.depth), cfg.tap.get("depth", 1), seed=cfg.seed)
        report.add(tap_result(tr))
        lap("tap")
    if "polyapprox" in checks:
        lvl = cfg.polyapprox.get("level", 2)
        scale = float(Fraction(str(cfg.polyapprox.get("scale", "1/25"))))
        fms = sample_metric(s.complexes[lvl], cfg.polyapprox.get("depth", 0))
        try:
            cover = nagata_cover_grid(fms, scale)
        except CertificateError as exc:
            report.add(CheckResult("polyapprox", False, detail=str(exc), witness={"cover": exc.certificate},
                                   locator={"level": lvl}))
        else:
            _, cert = poly_approx(fms, cover)
            report.add(CheckResult("polyapprox", cert.passed, witness={"cover": cover.to_dict(), **cert.to_dict()},
                                   locator=None if cert.passed else {"level": lvl}))
        lap("polyapprox")
    if "flatnorm" in checks:
        report.extend(flatnorm_checks(cfg.flatnorm, cfg.seed))
        lap("flatnorm")
    if "cubapprox" in checks:
        report.extend(cubapprox_checks(cfg.cubapprox))
        lap("cubapprox")
    if out is not None:
        out = Path(out)
        save_system(s, out / "system")
        _dump({"config": cfg.to_dict(), **report.to_dict()}, out / "report.json")
        _dump(timings, out / "timings.json")
        _dump({"report": "report.json", "timings": "timings.json", "system": "system/manifest.json"},
              out / "manifest.json")
    return report, timings
