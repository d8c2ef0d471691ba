"""Nagata covers of sampled complexes and the partition-of-unity map into their nerve.

Covers are built heuristically from shifted coordinate grids and then checked
on the sample; only verified covers are returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from .errors import CertificateError, ComplexError
from .metric import FiniteMetricSpace

TOL = 1e-9


@dataclass
class NagataCover:
    s: float
    n: int
    families: list[list[np.ndarray]]
    C: float = 0.0
    sorted: bool = False
    checks: dict = field(default_factory=dict)

    @property
    def sets(self) -> list[tuple[int, np.ndarray]]:
        return [(j, S) for j, fam in enumerate(self.families) for S in fam]

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "n": self.n,
            "C": self.C,
            "sorted": self.sorted,
            "family_sizes": [len(f) for f in self.families],
            "checks": self.checks,
        }


def set_distance(d: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float(d[np.ix_(a, b)].min())


def diameter(d: np.ndarray, a: np.ndarray) -> float:
    return float(d[np.ix_(a, a)].max())


def verify_cover(fms: FiniteMetricSpace, cover: NagataCover, C: float | None = None) -> dict:
    """Measured separation, diameters, coverage and sortedness of a cover on the sample."""
    d, s = fms.dist, cover.s
    sep = np.inf
    for fam in cover.families:
        for x, a in enumerate(fam):
            for b in fam[x + 1 :]:
                sep = min(sep, set_distance(d, a, b))
    diam = max((diameter(d, S) for _, S in cover.sets), default=0.0)
    covered = np.zeros(len(fms), dtype=bool)
    for _, S in cover.sets:
        covered[S] = True
    sorted_ok = True
    for j in range(1, len(cover.families)):
        for S in cover.families[j]:
            if not any(set_distance(d, S, T) < s for T in cover.families[j - 1]):
                sorted_ok = False
    realized = diam / s if s > 0 else 0.0
    bound = realized if C is None else C
    return {
        "separation": float(sep) if np.isfinite(sep) else None,
        "NSep": bool(sep >= s - TOL),
        "max_diameter": diam,
        "NBd": bool(diam <= bound * s + TOL),
        "coverage": bool(covered.all()),
        "sorted": sorted_ok,
        "realized_C": realized,
    }


def _components(d: np.ndarray, idx: np.ndarray, s: float) -> list[np.ndarray]:
    """Single-linkage clusters of ``idx`` joined by distances up to ``s``; distinct clusters end up more than ``s`` apart."""
    if len(idx) == 1:
        return [idx]
    sub = d[np.ix_(idx, idx)]
    z = linkage(squareform(sub, checks=False), method="single")
    labels = fcluster(z, t=s * (1 + 1e-9), criterion="distance")
    return [idx[labels == k] for k in np.unique(labels)]


def sort_cover(fms: FiniteMetricSpace, families: list[list[np.ndarray]], s: float) -> list[list[np.ndarray]]:
    """Move each set with no partner closer than ``s`` in the previous family down one
    family, until every set in family ``j >= 1`` has such a partner.

    A moved set is at distance at least ``s`` from every set it joins, so
    separation within families is preserved.
    """
    fams = [list(f) for f in families]
    d = fms.dist
    changed = True
    while changed:
        changed = False
        for j in range(1, len(fams)):
            keep = []
            for S in fams[j]:
                if any(set_distance(d, S, T) < s for T in fams[j - 1]):
                    keep.append(S)
                else:
                    fams[j - 1].append(S)
                    changed = True
            fams[j] = keep
    while len(fams) > 1 and not fams[-1]:
        fams.pop()
    return fams


def nagata_cover_grid(fms: FiniteMetricSpace, s: float, n: int | None = None, *,
                      margin: float | None = None, mesh: float | None = None,
                      sort: bool = True, strict: bool = True) -> NagataCover:
    """Cover by ``n + 1`` diagonally shifted grids of side ``(n + 1) s``.

    Each grid cube is shrunk by ``margin`` (default ``s / 2``) on every side,
    pulled back to the sample through the coordinates, and split into the
    single-linkage components at scale ``s``.  The result is sorted and then
    verified; ``strict`` raises on a failed verification.
    """
    if s <= 0:
        raise ComplexError("scale must be positive")
    if len(fms) == 1:
        cover = NagataCover(s, n or 0, [[np.array([0])]], 0.0, True)
        cover.checks = verify_cover(fms, cover)
        return cover
    if fms.coords is None:
        raise ComplexError("grid covers need sample coordinates")
    n = fms.coords.shape[1] if n is None else n
    mesh = float(fms.mesh) if mesh is None and fms.mesh is not None else mesh
    if mesh is not None and s < mesh - TOL:
        raise ComplexError(f"scale {s} is finer than the sampling mesh {mesh}")
    margin = s / 2 if margin is None else margin
    side = (n + 1) * s
    coords = fms.coords
    families: list[list[np.ndarray]] = []
    for j in range(n + 1):
        shifted = coords - j * s
        cube = np.floor(shifted / side + TOL).astype(np.int64)
        offset = shifted - cube * side
        inside = np.all((offset >= margin - TOL) & (offset < side - margin - TOL), axis=1)
        fam = []
        keys = {}
        for p in np.flatnonzero(inside):
            keys.setdefault(tuple(cube[p]), []).append(p)
        for key in sorted(keys):
            fam.extend(_components(fms.dist, np.array(keys[key]), s))
        families.append(fam)
    cover = NagataCover(s, n, families)
    if sort:
        cover.families = sort_cover(fms, families, s)
        cover.families += [[] for _ in range(n + 1 - len(cover.families))]
    checks = verify_cover(fms, cover)
    cover.C = checks["realized_C"]
    cover.sorted = checks["sorted"]
    cover.checks = checks
    if strict and not (checks["NSep"] and checks["NBd"] and checks["coverage"] and (checks["sorted"] or not sort)):
        raise CertificateError("grid cover failed verification", checks)
    return cover


# -- polyhedral approximation -----------------------------------------------------------------


@dataclass
class EmbeddedNerve:
    vertex_coords: np.ndarray  # one row per cover set (Kuratowski coordinates)
    simplices: list[tuple[int, ...]]
    images: np.ndarray  # F evaluated at every sample point
    weights: np.ndarray  # normalized partition of unity, points x sets

    @property
    def dimension(self) -> int:
        return max((len(t) for t in self.simplices), default=1) - 1


@dataclass
class PolyCertificate:
    s: float
    C: float
    n: int
    distortion: float
    lipschitz: float
    distortion_bound: float
    lipschitz_bound: float
    pou_min: float
    pou_max: float
    nerve_dimension: int

    @property
    def passed(self) -> bool:
        return (self.distortion <= self.distortion_bound + TOL
                and self.lipschitz <= self.lipschitz_bound + TOL
                and self.pou_min >= 1 - TOL and self.pou_max <= self.n + 1 + TOL
                and self.nerve_dimension <= self.n)

    def require(self) -> "PolyCertificate":
        if not self.passed:
            raise CertificateError("polyhedral approximation exceeded its bounds", self.to_dict())
        return self

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["passed"] = self.passed
        return out


def bump_matrix(fms: FiniteMetricSpace, cover: NagataCover) -> np.ndarray:
    """``clamp(1 - 3 dist(x, S) / s, 0, 1)`` for every point and cover set."""
    cols = [fms.dist[:, S].min(axis=1) for _, S in cover.sets]
    dist = np.stack(cols, axis=1)
    return np.clip(1 - 3 * dist / cover.s, 0.0, 1.0)


def kuratowski(fms: FiniteMetricSpace, cover: NagataCover) -> np.ndarray:
    """Row for each cover set: its distance function on the sample (sup-norm gives Hausdorff distance)."""
    return np.stack([fms.dist[:, S].min(axis=1) for _, S in cover.sets])


def _pairwise_sup(a: np.ndarray, chunk: int = 64) -> np.ndarray:
    out = np.empty((len(a), len(a)))
    for i in range(0, len(a), chunk):
        block = a[i : i + chunk]
        out[i : i + chunk] = np.abs(block[:, None, :] - a[None, :, :]).max(axis=2)
    return out


def poly_approx(fms: FiniteMetricSpace, cover: NagataCover, s: float | None = None) -> tuple[EmbeddedNerve, PolyCertificate]:
    """Map the sample into the nerve of ``cover`` and measure distortion and Lipschitz constant."""
    s = cover.s if s is None else s
    if abs(s - cover.s) > TOL:
        raise ComplexError("scale does not match the cover")
    if not cover.sorted:
        raise ComplexError("polyhedral approximation needs a sorted cover")
    phi = bump_matrix(fms, cover)
    total = phi.sum(axis=1)
    weights = phi / total[:, None]
    coords = kuratowski(fms, cover)
    images = weights @ coords
    simplices = sorted({tuple(np.flatnonzero(row > 0)) for row in weights})
    dp = _pairwise_sup(images)
    d = fms.dist
    distortion_ = float(np.max(np.abs(dp - d))) if len(d) > 1 else 0.0
    off = d > 0
    lip = float(np.max(dp[off] / d[off])) if off.any() else 0.0
    n = cover.n
    cert = PolyCertificate(
        s=s, C=cover.C, n=n,
        distortion=distortion_, lipschitz=lip,
        distortion_bound=(2 + 4 * cover.C) * s,
        lipschitz_bound=6 * n * (2 / 3 + cover.C),
        pou_min=float(total.min()), pou_max=float(total.max()),
        nerve_dimension=max(len(t) for t in simplices) - 1,
    )
    return EmbeddedNerve(coords, simplices, images, weights), cert
