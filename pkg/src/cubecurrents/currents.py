"""Cubical chains on cube complexes: boundary, mass, pushforward, flux axioms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .complex import CellMap, CubeComplex, facet_sign, frac_str, parse_frac
from .errors import ComplexError
from .report import CheckResult


@dataclass
class CubicalChain:
    """Sparse exact coefficients on top cells (``dim == n``) or faces (``dim == n - 1``)."""

    host: CubeComplex
    dim: int
    coeffs: dict[int, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        if self.dim not in (self.host.n, self.host.n - 1):
            raise ComplexError(f"chains live in dimension n or n-1, got {self.dim}")
        limit = len(self.host.cells) if self.dim == self.host.n else len(self.host.faces)
        clean = {}
        for k, v in self.coeffs.items():
            if not 0 <= k < limit:
                raise ComplexError(f"chain id {k} out of range")
            v = Fraction(v)
            if v:
                clean[k] = v
        self.coeffs = clean

    def __add__(self, other: "CubicalChain") -> "CubicalChain":
        self._compatible(other)
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, Fraction(0)) + v
        return CubicalChain(self.host, self.dim, out)

    def __neg__(self) -> "CubicalChain":
        return self.scale(-1)

    def __sub__(self, other: "CubicalChain") -> "CubicalChain":
        return self + (-other)

    def scale(self, c) -> "CubicalChain":
        c = Fraction(c)
        return CubicalChain(self.host, self.dim, {k: c * v for k, v in self.coeffs.items()})

    def _compatible(self, other: "CubicalChain") -> None:
        if other.host is not self.host or other.dim != self.dim:
            raise ComplexError("chains live on different hosts or dimensions")

    @property
    def unit(self) -> Fraction:
        """Volume of one carrier (cell or face)."""
        return self.host.cell_volume if self.dim == self.host.n else self.host.face_area

    def to_dict(self) -> dict:
        x = self.host
        return {
            "host": {"n": x.n, "m": x.m, "level": x.level, "cells": len(x.cells)},
            "dim": self.dim,
            "entries": [[k, frac_str(v)] for k, v in sorted(self.coeffs.items())],
        }

    @classmethod
    def from_dict(cls, host: CubeComplex, data: dict) -> "CubicalChain":
        h = data["host"]
        if (h["n"], h["m"], h["level"], h["cells"]) != (host.n, host.m, host.level, len(host.cells)):
            raise ComplexError("chain was saved on a different host")
        return cls(host, data["dim"], {int(k): parse_frac(v) for k, v in data["entries"]})


def fundamental_chain(x: CubeComplex) -> CubicalChain:
    return CubicalChain(x, x.n, {c.id: c.orientation * c.weight for c in x.cells})


def face_coefficient(x: CubeComplex, face, coeffs: dict[int, Fraction]) -> Fraction:
    total = Fraction(0)
    for c, side in face.incident:
        v = coeffs.get(c)
        if v:
            total += facet_sign(face.axis, side) * v
    return total


def boundary(t: CubicalChain) -> CubicalChain:
    x = t.host
    if t.dim != x.n:
        raise ComplexError("boundary is only carried for top-dimensional chains")
    out = {}
    for f in x.faces:
        v = face_coefficient(x, f, t.coeffs)
        if v:
            out[f.id] = v
    return CubicalChain(x, x.n - 1, out)


def mass(t: CubicalChain) -> Fraction:
    return sum((abs(v) for v in t.coeffs.values()), Fraction(0)) * t.unit


def pushforward(p: CellMap, t: CubicalChain) -> CubicalChain:
    if t.host is not p.source:
        raise ComplexError("chain is not hosted on the map's source")
    if t.dim == p.source.n:
        image = p.assignment
    else:
        image = p.face_map
    out: dict[int, Fraction] = {}
    for k, v in t.coeffs.items():
        out[image[k]] = out.get(image[k], Fraction(0)) + v
    return CubicalChain(p.target, t.dim, out)


# -- flux axioms ------------------------------------------------------------------


def _parent(x: CubeComplex, cell_id: int) -> tuple:
    return x.parent_key(cell_id, 1)


def is_cell_interior(x: CubeComplex, face) -> bool:
    """Whether a face of ``X^(1)`` lies inside one cell of ``X`` (not on its boundary)."""
    if face.is_boundary:
        return False
    parents = {_parent(x, c) for c, _ in face.incident}
    return len(parents) == 1


def induced_sign(x: CubeComplex, cell_id: int, axis: int, side: int) -> int:
    return x.cells[cell_id].orientation * facet_sign(axis, side)


def _signed_sums(p: CellMap, source_face) -> tuple[Fraction, Fraction]:
    """Weights of cells at a source face split by the induced sign of their images."""
    src, tgt = p.source, p.target
    plus = minus = Fraction(0)
    for c, side in source_face.incident:
        if induced_sign(tgt, p(c), source_face.axis, side) > 0:
            plus += src.cells[c].weight
        else:
            minus += src.cells[c].weight
    return plus, minus


def check_flux(p: CellMap) -> CheckResult:
    """Exact weight balance at every source face over a cell-interior target face."""
    tgt = p.target
    checked = 0
    for ft in tgt.faces:
        if not is_cell_interior(tgt, ft):
            continue
        for fs in p.face_fibers[ft.id]:
            plus, minus = _signed_sums(p, p.source.faces[fs])
            checked += 1
            if plus != minus:
                return CheckResult(
                    "IFlux", False,
                    locator={"level": p.source.level, "target_face": ft.id, "source_face": fs},
                    detail={"plus": frac_str(plus), "minus": frac_str(minus), "gap": frac_str(plus - minus)},
                )
    return CheckResult("IFlux", True, witness={"level": p.source.level, "faces_checked": checked})


def check_ipoinc(p: CellMap) -> CheckResult:
    """The lifted-weight ratio at each source face is the same for every target cell at its image."""
    src, tgt = p.source, p.target
    checked = 0
    for ft in tgt.faces:
        if len(ft.incident) < 2:
            continue
        for fs in p.face_fibers[ft.id]:
            lifted: dict[int, Fraction] = {c: Fraction(0) for c, _ in ft.incident}
            for c, _ in src.faces[fs].incident:
                lifted[p(c)] += src.cells[c].weight
            ratios = {t: lifted[t] / tgt.cells[t].weight for t in lifted}
            checked += 1
            if len(set(ratios.values())) != 1:
                return CheckResult(
                    "IPoinc", False,
                    locator={"level": src.level, "target_face": ft.id, "source_face": fs},
                    detail={str(t): frac_str(r) for t, r in sorted(ratios.items())},
                )
    return CheckResult("IPoinc", True, witness={"level": src.level, "faces_checked": checked})


def boundary_mass_by_flux(p: CellMap) -> Fraction:
    """Boundary mass of the source fundamental chain summed over the flux at faces lying on
    boundaries of base cells; faces inside base cells are skipped, relying on flux balance."""
    src, tgt = p.source, p.target
    total = Fraction(0)
    for ft in tgt.faces:
        if is_cell_interior(tgt, ft):
            continue
        for fs in p.face_fibers[ft.id]:
            plus, minus = _signed_sums(p, src.faces[fs])
            total += abs(plus - minus)
    return total * src.face_area


# -- conservation ------------------------------------------------------------------------


@dataclass
class ConservationRow:
    level: int
    mass: Fraction
    boundary_mass: Fraction
    boundary_mass_flux: Fraction | None
    mass_in_u: Fraction | None = None
    boundary_mass_in_u: Fraction | None = None

    def to_dict(self) -> dict:
        return {k: (frac_str(v) if isinstance(v, Fraction) else v) for k, v in self.__dict__.items()}


@dataclass
class ConservationReport:
    rows: list[ConservationRow]
    u_level: int | None = None
    u_cells: list[int] | None = None

    @property
    def constant(self) -> bool:
        cols = [
            [r.mass for r in self.rows],
            [r.boundary_mass for r in self.rows],
        ]
        if self.u_cells is not None:
            cols.append([r.mass_in_u for r in self.rows if r.mass_in_u is not None])
            cols.append([r.boundary_mass_in_u for r in self.rows if r.boundary_mass_in_u is not None])
        two_paths = all(r.boundary_mass_flux in (None, r.boundary_mass) for r in self.rows)
        return two_paths and all(len(set(c)) <= 1 for c in cols)

    def first_break(self) -> int | None:
        """Level of the first row differing from earlier rows or whose two paths disagree."""
        ref: dict[str, Fraction] = {}
        for r in self.rows:
            if r.boundary_mass_flux not in (None, r.boundary_mass):
                return r.level
            for name in ("mass", "boundary_mass", "mass_in_u", "boundary_mass_in_u"):
                v = getattr(r, name)
                if v is not None and ref.setdefault(name, v) != v:
                    return r.level
        return None

    def to_check(self) -> CheckResult:
        ok = self.constant
        return CheckResult("conservation", ok, witness=self.to_dict(),
                           locator=None if ok else {"level": self.first_break()})

    def to_dict(self) -> dict:
        return {
            "constant": self.constant,
            "u_level": self.u_level,
            "u_cells": self.u_cells,
            "rows": [r.to_dict() for r in self.rows],
        }


def _ancestors(x: CubeComplex, levels: int) -> list[tuple]:
    return [x.parent_key(c.id, levels) for c in x.cells]


def restricted_masses(x: CubeComplex, inside: Sequence[bool]) -> tuple[Fraction, Fraction]:
    """Mass of the fundamental chain and of its boundary over the open union of marked cells.

    A face counts when every cell incident to it is marked.
    """
    coeffs = fundamental_chain(x).coeffs
    m = sum((abs(coeffs.get(c, 0)) for c in range(len(x.cells)) if inside[c]), Fraction(0))
    b = Fraction(0)
    for f in x.faces:
        if all(inside[c] for c, _ in f.incident):
            b += abs(face_coefficient(x, f, coeffs))
    return m * x.cell_volume, b * x.face_area


def conservation_report(s, u_level: int | None = None, u_cells: Iterable[int] | None = None) -> ConservationReport:
    """Mass and boundary mass of every level's fundamental chain, optionally over the
    preimage of a union ``U`` of cells of ``X_{u_level}``."""
    u_set = None if u_cells is None else set(u_cells)
    if u_set is not None:
        if u_level is None or not 0 <= u_level <= s.depth:
            raise ComplexError("u_level must name a built level")
        u_keys = {s.complexes[u_level].cells[c].key for c in u_set}
    rows = []
    for i, x in enumerate(s.complexes):
        n_i = fundamental_chain(x)
        row = ConservationRow(i, mass(n_i), mass(boundary(n_i)),
                              boundary_mass_by_flux(s.maps[i - 1]) if i > 0 else None)
        if u_set is not None and i >= u_level:
            keys = _ancestors(x, i - u_level)
            row.mass_in_u, row.boundary_mass_in_u = restricted_masses(x, [k in u_keys for k in keys])
        rows.append(row)
    return ConservationReport(rows, u_level, sorted(u_set) if u_set is not None else None)


# -- evaluation on forms ------------------------------------------------------------------


@dataclass
class MultilinearForm:
    """Functions ``f_0, ..., f_n`` given by values at the identified vertices of ``host``.

    Each function is multilinear on every cell of ``host``.
    """

    host: CubeComplex
    values: np.ndarray  # shape (n + 1, host vertex count)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        want = (self.host.n + 1, self.host.n_vertices)
        if self.values.shape != want:
            raise ComplexError(f"form values must have shape {want}, got {self.values.shape}")

    @classmethod
    def random(cls, host: CubeComplex, rng: np.random.Generator) -> "MultilinearForm":
        return cls(host, rng.uniform(-1.0, 1.0, size=(host.n + 1, host.n_vertices)))

    @classmethod
    def coordinates(cls, host: CubeComplex, f0=None) -> "MultilinearForm":
        """``f_j = x_j`` for ``j >= 1``; ``f0`` defaults to the constant 1 or may be an axis index."""
        pts = vertex_coordinates(host)
        vals = [np.ones(len(pts)) if f0 is None else pts[:, f0]]
        vals.extend(pts[:, a] for a in range(host.n))
        return cls(host, np.array(vals))


def vertex_coordinates(x: CubeComplex) -> np.ndarray:
    """Unit-cube coordinates of each identified vertex."""
    classes = x.vertex_classes
    pts = np.zeros((x.n_vertices, x.n))
    bits = (np.arange(1 << x.n)[:, None] >> np.arange(x.n)[None, :]) & 1
    anchors = np.array([c.anchor for c in x.cells], dtype=float)
    corner = (anchors[:, None, :] + bits[None, :, :]) / x.m**x.level
    pts[classes.ravel()] = corner.reshape(-1, x.n)
    return pts


def default_quad_order(n: int) -> int:
    """Gauss points per axis integrating ``f0 * det(Df)`` exactly for multilinear data."""
    return math.ceil((n + 1) / 2)


def evaluate_on_form(t: CubicalChain, form: MultilinearForm, quad_order: int | None = None) -> float:
    """``sum_cells coef * integral(f0 * det(d f_j / d x_l))`` with forms pulled back to ``t``'s host.

    Cells of the host are matched to the form's host by anchor and label prefix.
    """
    x, k = t.host, form.host
    if t.dim != x.n:
        raise ComplexError("only top-dimensional chains are evaluated on forms")
    if (x.n, x.m) != (k.n, k.m) or x.level < k.level:
        raise ComplexError("form host must be a coarser level of the same system")
    if not t.coeffs:
        return 0.0
    n = x.n
    q = default_quad_order(n) if quad_order is None else quad_order
    nodes, weights = np.polynomial.legendre.leggauss(q)
    nodes = (nodes + 1) / 2
    weights = weights / 2
    grid = np.stack(np.meshgrid(*([nodes] * n), indexing="ij"), axis=-1).reshape(-1, n)
    wq = np.prod(np.stack(np.meshgrid(*([weights] * n), indexing="ij"), axis=-1).reshape(-1, n), axis=1)

    ids = np.array(sorted(t.coeffs))
    coef = np.array([float(t.coeffs[i]) for i in ids])
    r = x.m ** (x.level - k.level)
    hosts = []
    offsets = []
    for i in ids:
        c = x.cells[i]
        key = x.parent_key(i, x.level - k.level)
        h = k.get(key)
        if h is None:
            raise ComplexError(f"cell {c.key} has no ancestor {key} in the form host")
        hosts.append(h)
        offsets.append([a - b * r for a, b in zip(c.anchor, key[0])])
    hosts = np.array(hosts)
    local = (np.array(offsets, dtype=float)[:, None, :] + grid[None, :, :]) / r  # (C, Q, n)

    bits = (np.arange(1 << n)[:, None] >> np.arange(n)[None, :]) & 1  # (corners, n)
    lin = np.where(bits[None, None, :, :] == 1, local[:, :, None, :], 1 - local[:, :, None, :])
    basis = np.prod(lin, axis=-1)  # (C, Q, corners)
    dbasis = np.empty(basis.shape + (n,))
    sign = np.where(bits == 1, 1.0, -1.0)  # (corners, n)
    for a in range(n):
        others = np.delete(lin, a, axis=-1)
        dbasis[..., a] = np.prod(others, axis=-1) * sign[None, None, :, a]
    dbasis *= k.m**k.level  # derivative in unit-cube coordinates

    corner_vals = form.values[:, k.vertex_classes[hosts]]  # (n+1, C, corners)
    f0 = np.einsum("cqk,ck->cq", basis, corner_vals[0])
    jac = np.einsum("cqka,jck->cqja", dbasis, corner_vals[1:])  # (C, Q, n, n)
    integrand = f0 * np.linalg.det(jac)
    vol = float(x.cell_volume)
    return float(np.sum(coef * (integrand @ wq)) * vol)
