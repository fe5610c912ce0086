"""Finite metric measure spaces: validation, balls, volumes and fixtures.

Points are addressed by their position in ``ids``; that declaration order is
the canonical "point order" used for every tie-break downstream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import shortest_path

__all__ = [
    "SpaceError",
    "MetricMeasureSpace",
    "DoublingReport",
    "load_space",
    "space_to_json",
    "validate_space",
    "inner",
    "measure_distance",
    "fixture",
    "parse_fixture",
    "CRITICAL_EPS",
]

#: Relative bump used to step just past a critical radius under strict balls.
CRITICAL_EPS = 1e-9


class SpaceError(ValueError):
    """Raised when a space description violates the metric/measure contract."""


@dataclass(frozen=True, eq=False)
class MetricMeasureSpace:
    ids: tuple
    dist: np.ndarray
    weight: np.ndarray
    base_point: int = 0
    name: str = ""
    coords: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        dist = np.array(self.dist, dtype=float)
        weight = np.array(self.weight, dtype=float)
        dist.setflags(write=False)
        weight.setflags(write=False)
        object.__setattr__(self, "dist", dist)
        object.__setattr__(self, "weight", weight)
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))

    @property
    def n(self) -> int:
        return len(self.ids)

    def __len__(self):
        return self.n

    @cached_property
    def index(self) -> dict:
        return {pid: i for i, pid in enumerate(self.ids)}

    def idx(self, point) -> int:
        """Resolve a point id (or an integer index) to an index."""
        if isinstance(point, (int, np.integer)):
            if not 0 <= point < self.n:
                raise SpaceError(f"point index {point} out of range")
            return int(point)
        try:
            return self.index[str(point)]
        except KeyError:
            raise SpaceError(f"unknown point id {point!r}") from None

    @cached_property
    def total_mass(self) -> float:
        return math.fsum(self.weight)

    @cached_property
    def diameter(self) -> float:
        return float(self.dist.max())

    @cached_property
    def min_distance(self) -> float:
        if self.n < 2:
            return math.inf
        return float(self.dist[~np.eye(self.n, dtype=bool)].min())

    @cached_property
    def median_distance(self) -> float:
        iu = np.triu_indices(self.n, 1)
        return float(np.median(self.dist[iu])) if self.n > 1 else 1.0

    @cached_property
    def _sorted(self):
        # per-row ascending distances (stable, so ties keep point order)
        order = np.argsort(self.dist, axis=1, kind="stable")
        sd = np.take_along_axis(self.dist, order, axis=1)
        cw = np.cumsum(np.take_along_axis(np.broadcast_to(self.weight, self.dist.shape), order, axis=1), axis=1)
        return order, sd, cw

    def ball(self, x, r: float) -> np.ndarray:
        """Boolean mask of the open ball ``{y : d(x, y) < r}``."""
        return self.dist[self.idx(x)] < r

    def volume(self, x, r) -> np.ndarray | float:
        """``V(x, r) = mu(B(x, r))``; ``r`` may be an array."""
        i = self.idx(x)
        _, sd, cw = self._sorted
        k = np.searchsorted(sd[i], r, side="left")
        vals = np.where(k > 0, cw[i][np.maximum(k - 1, 0)], 0.0)
        return float(vals) if np.ndim(vals) == 0 else vals

    def volumes(self, r: np.ndarray) -> np.ndarray:
        """``V(x, r[x])`` for every point ``x`` at its own radius."""
        r = np.broadcast_to(np.asarray(r, dtype=float), (self.n,))
        _, sd, cw = self._sorted
        out = np.empty(self.n)
        for i in range(self.n):
            k = np.searchsorted(sd[i], r[i], side="left")
            out[i] = cw[i][k - 1] if k > 0 else 0.0
        return out

    @cached_property
    def pair_volume(self) -> np.ndarray:
        """Matrix ``V(x, y) = V(x, d(x, y))`` with ``V(x, x) = weight(x)``."""
        order, sd, cw = self._sorted
        out = np.empty_like(self.dist)
        for i in range(self.n):
            k = np.searchsorted(sd[i], self.dist[i], side="left")
            out[i] = np.where(k > 0, cw[i][np.maximum(k - 1, 0)], 0.0)
            out[i, i] = self.weight[i]
        out.setflags(write=False)
        return out

    def critical_radii(self, x) -> np.ndarray:
        """Distinct positive distances from ``x`` and their just-larger twins."""
        d = np.unique(self.dist[self.idx(x)])
        d = d[d > 0]
        return np.sort(np.concatenate([d, d * (1 + CRITICAL_EPS)]))

    @cached_property
    def doubling(self) -> "DoublingReport":
        return validate_space(self)

    def function(self, values) -> np.ndarray:
        """Coerce ``values`` to a finite function on this space."""
        f = np.asarray(values, dtype=float)
        if f.shape != (self.n,):
            raise SpaceError(f"function has shape {f.shape}, space has {self.n} points")
        if not np.all(np.isfinite(f)):
            raise SpaceError("function has non-finite entries")
        return f


def _check_metric(dist: np.ndarray, rtol: float = 0.0, ids=None) -> None:
    n = dist.shape[0]
    name = (lambda i: repr(ids[i])) if ids is not None else str
    if dist.shape != (n, n):
        raise SpaceError("distance table must be square")
    if not np.all(np.isfinite(dist)):
        raise SpaceError("distance table has non-finite entries")
    if np.any(dist < 0):
        i, j = np.argwhere(dist < 0)[0]
        raise SpaceError(f"negative distance at ({name(i)}, {name(j)})")
    if not np.array_equal(dist, dist.T):
        i, j = np.argwhere(dist != dist.T)[0]
        raise SpaceError(f"asymmetric distance at ({name(i)}, {name(j)})")
    if np.any(np.diag(dist) != 0):
        raise SpaceError("nonzero self-distance")
    off = ~np.eye(n, dtype=bool)
    if np.any(dist[off] == 0):
        i, j = np.argwhere((dist == 0) & off)[0]
        raise SpaceError(f"distinct points {name(i)}, {name(j)} at distance 0")
    worst, witness = 0.0, None
    for y in range(n):
        # d(x, z) - d(x, y) - d(y, z) over all x, z
        excess = dist - (dist[:, y][:, None] + dist[y][None, :]) * (1 + rtol)
        m = excess.max()
        if m > worst:
            x, z = np.unravel_index(np.argmax(excess), excess.shape)
            worst, witness = float(m), (int(x), y, int(z))
    if witness is not None:
        x, y, z = witness
        raise SpaceError(f"triangle inequality violated by {worst:.3g} at triple ({name(x)}, {name(y)}, {name(z)})")


def _make_space(ids, dist, weight, base_point=None, name="", rtol=0.0, coords=None):
    ids = [str(i) for i in ids]
    if len(set(ids)) != len(ids):
        raise SpaceError("point ids are not unique")
    if len(ids) == 0:
        raise SpaceError("space has no points")
    weight = np.asarray(weight, dtype=float)
    if weight.shape != (len(ids),) or not np.all(np.isfinite(weight)):
        raise SpaceError("bad weight vector")
    if np.any(weight <= 0):
        raise SpaceError(f"nonpositive weight at point {ids[int(np.argmin(weight))]!r}")
    dist = np.asarray(dist, dtype=float)
    _check_metric(dist, rtol=rtol, ids=ids)
    bp = 0 if base_point is None else ids.index(str(base_point)) if str(base_point) in ids else None
    if bp is None:
        raise SpaceError(f"unknown base point {base_point!r}")
    return MetricMeasureSpace(tuple(ids), dist, weight, bp, name, coords)


def _euclidean(coords: np.ndarray) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff**2).sum(-1))


def load_space(source) -> MetricMeasureSpace:
    """Load a ``space/v1`` JSON document (path, JSON text or parsed dict)."""
    if isinstance(source, dict):
        doc = source
    else:
        text = Path(source).read_text(encoding="utf-8") if not str(source).lstrip().startswith("{") else str(source)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise SpaceError(f"invalid JSON: {e}") from None
    if doc.get("schema") != "space/v1":
        raise SpaceError("schema must be 'space/v1'")
    mode = doc.get("metric")
    if mode not in ("euclidean", "matrix", "graph"):
        raise SpaceError(f"unknown metric mode {mode!r}")
    pts = doc.get("points")
    if not isinstance(pts, list) or not pts:
        raise SpaceError("'points' must be a nonempty list")
    allowed = {"euclidean": set(), "matrix": {"matrix"}, "graph": {"edges"}}[mode]
    for extra in ("matrix", "edges"):
        if extra in doc and extra not in allowed:
            raise SpaceError(f"field {extra!r} not allowed for metric {mode!r}")
        if extra in allowed and extra not in doc:
            raise SpaceError(f"metric {mode!r} requires field {extra!r}")
    try:
        ids = [str(p["id"]) for p in pts]
        weight = [float(p.get("weight", 1.0)) for p in pts]
    except (KeyError, TypeError, ValueError):
        raise SpaceError("each point needs an 'id' and numeric 'weight'") from None
    if len(set(ids)) != len(ids):
        raise SpaceError("point ids are not unique")
    has_coords = ["coords" in p for p in pts]
    if mode == "euclidean":
        if not all(has_coords):
            raise SpaceError("euclidean metric requires 'coords' on every point")
        coords = np.asarray([p["coords"] for p in pts], dtype=float)
        if coords.ndim != 2:
            raise SpaceError("coords must all have the same dimension")
        dist = _euclidean(coords)
        return _make_space(ids, dist, weight, doc.get("base_point"), doc.get("name", ""), rtol=1e-12, coords=coords)
    if any(has_coords):
        raise SpaceError(f"'coords' not allowed for metric {mode!r}")
    n = len(ids)
    if mode == "matrix":
        dist = np.asarray(doc["matrix"], dtype=float)
        if dist.shape != (n, n):
            raise SpaceError(f"matrix must be {n}x{n}")
        return _make_space(ids, dist, weight, doc.get("base_point"), doc.get("name", ""))
    pos = {pid: i for i, pid in enumerate(ids)}
    adj = np.full((n, n), np.inf)
    for e in doc["edges"]:
        try:
            a, b, ln = pos[str(e["a"])], pos[str(e["b"])], float(e["len"])
        except KeyError:
            raise SpaceError(f"bad edge {e!r}") from None
        if not ln > 0:
            raise SpaceError(f"edge {e!r} must have positive length")
        adj[a, b] = adj[b, a] = min(adj[a, b], ln)
    np.fill_diagonal(adj, 0.0)
    dist = shortest_path(np.where(np.isinf(adj), 0.0, adj), method="FW", directed=False)
    if np.any(np.isinf(dist)):
        raise SpaceError("graph is disconnected")
    return _make_space(ids, dist, weight, doc.get("base_point"), doc.get("name", ""))


def space_to_json(S: MetricMeasureSpace) -> dict:
    """Serialize to ``space/v1``; euclidean when coordinates are known."""
    if S.coords is not None:
        pts = [{"id": i, "weight": float(w), "coords": [float(c) for c in xs]} for i, w, xs in zip(S.ids, S.weight, S.coords)]
        doc = {"schema": "space/v1", "metric": "euclidean", "points": pts}
    else:
        pts = [{"id": i, "weight": float(w)} for i, w in zip(S.ids, S.weight)]
        doc = {"schema": "space/v1", "metric": "matrix", "points": pts, "matrix": S.dist.tolist()}
    doc["base_point"] = S.ids[S.base_point]
    if S.name:
        doc["name"] = S.name
    return doc


@dataclass(frozen=True)
class DoublingReport:
    C_hat: float
    n_hat: float
    witness: tuple
    N0_hat: int
    G0_hat: float

    def to_dict(self) -> dict:
        return {
            "C_hat": self.C_hat,
            "n_hat": self.n_hat,
            "witness": {"x": self.witness[0], "r": self.witness[1]},
            "N0_hat": self.N0_hat,
            "G0_hat": self.G0_hat,
        }


def _greedy_cover(members: np.ndarray, near: np.ndarray) -> int:
    """Greedy set cover of ``members`` by rows of ``near`` (upper bound)."""
    uncovered = members.copy()
    count = 0
    while uncovered.any():
        gain = near[:, uncovered].sum(axis=1)
        j = int(np.argmax(gain))
        uncovered &= ~near[j]
        count += 1
    return count


def covering_number(S: MetricMeasureSpace, radii=None, max_radii: int = 16) -> int:
    """Largest greedy count of ``r/2``-balls needed to cover an ``r``-ball."""
    if S.n == 1:
        return 1
    if radii is None:
        d = np.unique(S.dist[S.dist > 0])
        pick = np.unique(np.round(np.linspace(0, len(d) - 1, min(max_radii, len(d)))).astype(int))
        radii = d[pick] * (1 + CRITICAL_EPS)
    best = 1
    for r in radii:
        near = S.dist < r / 2
        inside = S.dist < r
        for x in range(S.n):
            best = max(best, _greedy_cover(inside[x], near))
    return best


def validate_space(S: MetricMeasureSpace, radius_grid=None) -> DoublingReport:
    """Measure the doubling constant and geometric-doubling count of ``S``.

    With ``radius_grid=None`` each center is scanned at its own critical
    radii, which realizes the supremum exactly for strict balls.
    """
    best, witness = 1.0, (S.ids[0], 0.0)
    for x in range(S.n):
        radii = S.critical_radii(x) if radius_grid is None else np.asarray(radius_grid, dtype=float)
        if radii.size == 0:
            continue
        v1 = S.volume(x, radii)
        v2 = S.volume(x, 2 * radii)
        ok = v1 > 0
        ratio = np.where(ok, v2 / np.where(ok, v1, 1.0), 0.0)
        j = int(np.argmax(ratio))
        if ratio[j] > best:
            best, witness = float(ratio[j]), (S.ids[x], float(radii[j]))
    N0 = covering_number(S)
    return DoublingReport(best, math.log2(best), witness, N0, math.log2(N0))


def inner(S: MetricMeasureSpace, f, g) -> float:
    """Weighted L2 inner product."""
    f, g = S.function(f), S.function(g)
    return float(np.dot(f * g, S.weight))


def measure_distance(S: MetricMeasureSpace, x, y) -> float:
    """Smallest measure of a ball containing both ``x`` and ``y``."""
    i, j = S.idx(x), S.idx(y)
    if i == j:
        return float(S.weight[i])
    # smallest ball around z holding both is {w : d(z, w) <= max(d(z,x), d(z,y))}
    reach = np.maximum(S.dist[:, i], S.dist[:, j])
    masses = [(S.weight[S.dist[z] <= reach[z]]).sum() for z in range(S.n)]
    return float(min(masses))


def _line(n: int = 4) -> MetricMeasureSpace:
    coords = np.arange(n, dtype=float)[:, None]
    return MetricMeasureSpace(tuple(f"p{i}" for i in range(n)), _euclidean(coords), np.ones(n), 0, f"line{n}", coords)


def fixture(name: str, *params, seed: int | None = None) -> MetricMeasureSpace:
    """Canonical test spaces: ``line4``, ``ring(n)``, ``cantor(depth)``, ``cloud(n, dim, seed)``."""
    if name == "line4":
        return _line(4)
    if name == "ring":
        (n,) = params or (16,)
        n = int(n)
        if n < 2:
            raise SpaceError("ring needs n >= 2")
        k = np.arange(n)
        gap = np.abs(k[:, None] - k[None, :])
        dist = np.minimum(gap, n - gap).astype(float)
        return MetricMeasureSpace(tuple(f"p{i}" for i in range(n)), dist, np.ones(n), 0, f"ring({n})")
    if name == "cantor":
        (depth,) = params or (3,)
        depth = int(depth)
        if depth < 0:
            raise SpaceError("cantor depth must be >= 0")
        intervals = [(0.0, 1.0)]
        for _ in range(depth):
            intervals = [piece for a, b in intervals for piece in ((a, a + (b - a) / 3), (b - (b - a) / 3, b))]
        pts = np.array(sorted({p for ab in intervals for p in ab}))[:, None]
        n = len(pts)
        return MetricMeasureSpace(tuple(f"p{i}" for i in range(n)), _euclidean(pts), np.ones(n), 0, f"cantor({depth})", pts)
    if name == "cloud":
        n, dim = (int(params[0]), int(params[1])) if len(params) >= 2 else (int(params[0]), 2)
        s = int(params[2]) if len(params) >= 3 else (0 if seed is None else int(seed))
        if n < 2:
            raise SpaceError("cloud needs n >= 2")
        pts = np.random.default_rng(s).standard_normal((n, dim))
        return MetricMeasureSpace(tuple(f"p{i}" for i in range(n)), _euclidean(pts), np.ones(n), 0, f"cloud({n},{dim},{s})", pts)
    raise SpaceError(f"unknown fixture {name!r}")


def parse_fixture(spec: str) -> MetricMeasureSpace:
    """Build a fixture from ``NAME[:p1[:p2...]]`` (also accepts ``NAME(p1,p2)``)."""
    spec = spec.strip()
    if "(" in spec and spec.endswith(")"):
        name, args = spec[:-1].split("(", 1)
        params = [a.strip() for a in args.split(",") if a.strip()]
    else:
        name, *params = spec.split(":")
    try:
        return fixture(name, *[int(p) for p in params])
    except ValueError as e:
        raise SpaceError(f"bad fixture spec {spec!r}: {e}") from None
