"""Cubical chains on regular grids in the unit cube and the flat norm as a linear program."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Iterable

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix, hstack, identity

from .errors import ComplexError


class GridComplex:
    """All cubes of a regular grid with ``res`` cells per axis in ``[0, 1]**d``.

    A ``k``-cube is ``(position, axes)``: ``axes`` is a sorted ``k``-tuple of
    spanned directions and ``position`` its lowest corner in lattice units.
    """

    def __init__(self, d: int, res: int):
        if d < 1:
            raise ComplexError("grid dimension must be >= 1")
        if res < 1:
            raise ComplexError("grid resolution must be >= 1")
        self.d = d
        self.res = res

    def __repr__(self) -> str:
        return f"GridComplex(d={self.d}, res={self.res})"

    def __eq__(self, other) -> bool:
        return isinstance(other, GridComplex) and (self.d, self.res) == (other.d, other.res)

    def __hash__(self) -> int:
        return hash((self.d, self.res))

    @property
    def side(self) -> float:
        return 1.0 / self.res

    def shape(self, axes: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(self.res if a in axes else self.res + 1 for a in range(self.d))

    @cached_property
    def _blocks(self) -> dict[int, list[tuple[tuple[int, ...], int]]]:
        out = {}
        for k in range(self.d + 1):
            off, rows = 0, []
            for axes in combinations(range(self.d), k):
                rows.append((axes, off))
                off += int(np.prod(self.shape(axes)))
            out[k] = rows
        return out

    def count(self, k: int) -> int:
        axes, off = self._blocks[k][-1]
        return off + int(np.prod(self.shape(axes)))

    def index(self, position: Iterable[int], axes: Iterable[int]) -> int:
        axes = tuple(sorted(axes))
        for ax, off in self._blocks[len(axes)]:
            if ax == axes:
                return off + int(np.ravel_multi_index(tuple(position), self.shape(axes)))
        raise ComplexError(f"no cube spans axes {axes}")

    def cell(self, k: int, idx: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        for axes, off in reversed(self._blocks[k]):
            if idx >= off:
                pos = np.unravel_index(idx - off, self.shape(axes))
                return tuple(int(p) for p in pos), axes
        raise ComplexError(f"cube index {idx} out of range")

    def boundary_matrix(self, k: int) -> csr_matrix:
        """Signed incidence from ``k``-cubes to ``(k-1)``-cubes.

        The facet of a cube dropping its ``j``-th spanned axis carries sign
        ``(-1)**j`` on the high side and ``-(-1)**j`` on the low side.
        """
        if not 1 <= k <= self.d:
            raise ComplexError(f"boundary needs 1 <= k <= {self.d}, got {k}")
        rows, cols, vals = [], [], []
        for axes, off in self._blocks[k]:
            shape = self.shape(axes)
            grid = np.indices(shape).reshape(self.d, -1)
            ids = off + np.arange(grid.shape[1])
            for j, a in enumerate(axes):
                face_axes = axes[:j] + axes[j + 1 :]
                fshape = self.shape(face_axes)
                base = dict(self._blocks[k - 1])[face_axes]
                sign = 1 if j % 2 == 0 else -1
                for shift, sg in ((1, sign), (0, -sign)):
                    pos = grid.copy()
                    pos[a] += shift
                    rows.append(base + np.ravel_multi_index(pos, fshape))
                    cols.append(ids)
                    vals.append(np.full(len(ids), sg, dtype=float))
        return csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.count(k - 1), self.count(k)),
        )

    def top_index(self, position: Iterable[int]) -> int:
        return self.index(position, tuple(range(self.d)))


@dataclass
class GridChain:
    grid: GridComplex
    k: int
    coeffs: np.ndarray

    def __post_init__(self):
        if not 0 <= self.k <= self.grid.d:
            raise ComplexError(f"chain dimension must lie in 0..{self.grid.d}")
        self.coeffs = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if self.coeffs.shape != (self.grid.count(self.k),):
            raise ComplexError("coefficient vector does not match the grid")

    @classmethod
    def zero(cls, grid: GridComplex, k: int) -> "GridChain":
        return cls(grid, k, np.zeros(grid.count(k)))

    @classmethod
    def from_entries(cls, grid: GridComplex, k: int, entries: dict[int, float]) -> "GridChain":
        c = np.zeros(grid.count(k))
        for i, v in entries.items():
            c[i] = v
        return cls(grid, k, c)

    def _same(self, other: "GridChain") -> None:
        if other.grid != self.grid or other.k != self.k:
            raise ComplexError("chains live on different grids or dimensions")

    def __add__(self, other: "GridChain") -> "GridChain":
        self._same(other)
        return GridChain(self.grid, self.k, self.coeffs + other.coeffs)

    def __sub__(self, other: "GridChain") -> "GridChain":
        self._same(other)
        return GridChain(self.grid, self.k, self.coeffs - other.coeffs)

    def __mul__(self, c: float) -> "GridChain":
        return GridChain(self.grid, self.k, self.coeffs * c)

    __rmul__ = __mul__

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.coeffs)

    def mass(self) -> float:
        return float(np.abs(self.coeffs).sum() * self.grid.side**self.k)

    def boundary(self) -> "GridChain":
        if self.k == 0:
            raise ComplexError("0-chains have no boundary")
        return GridChain(self.grid, self.k - 1, self.grid.boundary_matrix(self.k) @ self.coeffs)

    def normal_mass(self) -> float:
        return self.mass() + (self.boundary().mass() if self.k > 0 else 0.0)

    def to_dict(self) -> dict:
        return {
            "grid": {"d": self.grid.d, "res": self.grid.res},
            "dim": self.k,
            "entries": [[int(i), float(self.coeffs[i])] for i in self.support],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridChain":
        g = GridComplex(data["grid"]["d"], data["grid"]["res"])
        return cls.from_entries(g, data["dim"], {int(i): v for i, v in data["entries"]})


@dataclass
class FlatResult:
    value: float
    s1: GridChain
    s2: GridChain | None

    def __iter__(self):
        return iter((self.value, self.s1, self.s2))


def flat_norm(t: GridChain) -> FlatResult:
    """``min mass(S1) + mass(S2)`` over ``t = S1 + boundary(S2)`` on the grid.

    Solved as a linear program with each coefficient split into positive and
    negative parts.  Top-dimensional chains have no ``S2`` and return their mass.
    The chain is scaled to unit max coefficient first, so the solver's absolute
    feasibility tolerance cannot swallow small inputs.
    """
    g, k = t.grid, t.k
    if k == g.d:
        return FlatResult(t.mass(), t, None)
    if not np.any(t.coeffs):
        return FlatResult(0.0, t, GridChain.zero(g, k + 1))
    b = g.boundary_matrix(k + 1)
    nk, nk1 = b.shape
    h = g.side
    cost = np.concatenate([np.full(2 * nk, h**k), np.full(2 * nk1, h ** (k + 1))])
    eye = identity(nk, format="csr")
    a_eq = hstack([eye, -eye, b, -b], format="csr")
    scale = float(np.abs(t.coeffs).max())
    res = linprog(cost, A_eq=a_eq, b_eq=t.coeffs / scale, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"flat norm LP failed: {res.message}")
    x = res.x * scale
    s1 = GridChain(g, k, x[:nk] - x[nk : 2 * nk])
    s2 = GridChain(g, k + 1, x[2 * nk : 2 * nk + nk1] - x[2 * nk + nk1 :])
    return FlatResult(float(res.fun) * scale, s1, s2)


# -- rasterization -----------------------------------------------------------------------


def rasterize(density, grid: GridComplex, *, weight: float = 1.0, order: int = 4) -> GridChain:
    """Average a density over each top cell.

    ``density`` may be a shapely geometry (``d == 2``, exact clipping), a list
    of axis-aligned boxes ``(lo, hi)``, or a callable on points sampled at the
    midpoints of an ``order**d`` subgrid of each cell.
    """
    d, n = grid.d, grid.res
    vals = np.zeros((n,) * d)
    if hasattr(density, "intersection") and hasattr(density, "area"):
        if d != 2:
            raise ComplexError("polygon rasterization needs d = 2")
        from shapely.geometry import box

        for i in range(n):
            for j in range(n):
                cell = box(i / n, j / n, (i + 1) / n, (j + 1) / n)
                vals[i, j] = density.intersection(cell).area * n * n
    elif callable(density):
        u = (np.arange(order) + 0.5) / order
        sub = np.stack(np.meshgrid(*([u] * d), indexing="ij"), axis=-1).reshape(-1, d)
        corners = np.indices((n,) * d).reshape(d, -1).T
        pts = (corners[:, None, :] + sub[None, :, :]) / n
        f = np.asarray(density(pts.reshape(-1, d)), dtype=float).reshape(len(corners), -1)
        vals = f.mean(axis=1).reshape((n,) * d)
    else:
        for lo, hi in density:
            lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
            frac = np.ones((n,) * d)
            for a in range(d):
                edges = np.arange(n + 1) / n
                overlap = np.clip(np.minimum(edges[1:], hi[a]) - np.maximum(edges[:-1], lo[a]), 0, None) * n
                shape = [1] * d
                shape[a] = n
                frac = frac * overlap.reshape(shape)
            vals += frac
    return top_chain(grid, vals * weight)


def top_chain(grid: GridComplex, values: np.ndarray) -> GridChain:
    """Top-dimensional chain from an array indexed by cell position."""
    return GridChain(grid, grid.d, np.asarray(values, dtype=float).reshape(-1))


def top_values(t: GridChain) -> np.ndarray:
    if t.k != t.grid.d:
        raise ComplexError("expected a top-dimensional chain")
    return t.coeffs.reshape((t.grid.res,) * t.grid.d)


def rotated_square(center=(0.5, 0.5), side: float = np.sqrt(2) / 2):
    """The square of the given side rotated by 45 degrees about ``center``."""
    from shapely.geometry import Polygon

    r = side / np.sqrt(2)
    cx, cy = center
    return Polygon([(cx + r, cy), (cx, cy + r), (cx - r, cy), (cx, cy - r)])


# -- cubical approximation ---------------------------------------------------------------


def average_down(t: GridChain, coarse: GridComplex) -> GridChain:
    g = t.grid
    if coarse.d != g.d or g.res % coarse.res:
        raise ComplexError("fine grid must be an integer refinement of the coarse grid")
    r = g.res // coarse.res
    v = top_values(t)
    shape = []
    for _ in range(g.d):
        shape += [coarse.res, r]
    blocks = v.reshape(shape)
    return top_chain(coarse, blocks.mean(axis=tuple(range(1, 2 * g.d, 2))))


def upsample(t: GridChain, fine: GridComplex) -> GridChain:
    r = fine.res // t.grid.res
    v = top_values(t)
    for a in range(t.grid.d):
        v = np.repeat(v, r, axis=a)
    return top_chain(fine, v)


@dataclass
class ApproxCertificate:
    coarse_res: int
    fine_res: int
    flat_distance: float
    boundary_flat_distance: float | None
    mass: float
    mass_coarse: float
    normal_mass: float
    normal_mass_coarse: float
    eps: float | None
    normal_tol: float

    @property
    def normal_ok(self) -> bool:
        return self.normal_mass_coarse <= self.normal_mass + self.normal_tol

    @property
    def flat_ok(self) -> bool:
        return self.eps is None or self.flat_distance <= self.eps

    @property
    def passed(self) -> bool:
        return self.normal_ok and self.flat_ok

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out.update(normal_ok=self.normal_ok, flat_ok=self.flat_ok, passed=self.passed)
        return out


def cubical_approximation(t: GridChain, coarse: GridComplex, *, eps: float | None = None,
                          normal_tol: float = 1e-9, boundary_flat: bool = False) -> tuple[GridChain, ApproxCertificate]:
    """Average a top-dimensional chain onto a coarser grid and certify the result.

    The flat distance is measured on the fine grid; ``boundary_flat`` also
    reports the flat norm of the difference of boundaries.
    """
    if t.k != t.grid.d:
        raise ComplexError("cubical approximation acts on top-dimensional chains")
    tc = average_down(t, coarse)
    diff = t - upsample(tc, t.grid)
    bflat = flat_norm(diff.boundary()).value if boundary_flat else None
    cert = ApproxCertificate(
        coarse_res=coarse.res,
        fine_res=t.grid.res,
        flat_distance=flat_norm(diff).value,
        boundary_flat_distance=bflat,
        mass=t.mass(),
        mass_coarse=tc.mass(),
        normal_mass=t.normal_mass(),
        normal_mass_coarse=tc.normal_mass(),
        eps=eps,
        normal_tol=normal_tol,
    )
    return tc, cert
