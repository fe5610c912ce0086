"""Nested separated nets and half-open dyadic cubes on a finite metric space."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .space import MetricMeasureSpace

__all__ = [
    "DyadicError",
    "Nets",
    "DyadicSystem",
    "CheckResult",
    "GeometryReport",
    "build_nets",
    "build_cubes",
    "build_system",
    "verify_cubes",
    "separated_sum_diag",
    "cube_rows",
    "net_rows",
]

#: Default parent jitter for the randomized tie-break.
DEFAULT_JITTER = 0.2


class DyadicError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Nets:
    space: MetricMeasureSpace
    delta: float
    k_min: int
    k_max: int
    centers: dict  # level -> sorted int array of point indices

    @property
    def levels(self) -> range:
        return range(self.k_min, self.k_max + 1)


def build_nets(S: MetricMeasureSpace, delta: float, k_min: int | None = None, k_max: int | None = None) -> Nets:
    """Greedy nested nets from the finest level (all points) down to one center.

    ``k_max`` defaults to the smallest ``k`` with ``delta**k <= min distance``;
    ``k_min`` defaults to the first level holding a single center. Explicit
    overrides may extend the range with degenerate levels or truncate it
    from the coarse side.
    """
    if not 0 < delta <= 0.5:
        raise DyadicError(f"delta must lie in (0, 1/2], got {delta}")
    if S.n < 2:
        raise DyadicError("need at least two points")
    natural_max = math.ceil(math.log(S.min_distance) / math.log(delta) - 1e-12)
    while delta**natural_max > S.min_distance:
        natural_max += 1
    while delta ** (natural_max - 1) <= S.min_distance:
        natural_max -= 1
    if k_max is None:
        k_max = natural_max
    elif k_max < natural_max:
        raise DyadicError(f"k_max={k_max} is coarser than the finest separated level {natural_max}")
    if k_min is not None and k_min > k_max:
        raise DyadicError(f"k_min={k_min} exceeds k_max={k_max}")
    centers = {k_max: np.arange(S.n)}
    k = k_max
    while True:
        if k_min is not None and k <= k_min:
            break
        if k_min is None and len(centers[k]) == 1:
            break
        finer = centers[k]
        r = delta ** (k - 1)
        chosen = []
        for p in finer:
            if all(S.dist[p, q] >= r for q in chosen):
                chosen.append(int(p))
        k -= 1
        centers[k] = np.array(chosen, dtype=int)
    for c in centers.values():
        c.setflags(write=False)
    return Nets(S, float(delta), k, k_max, centers)


@dataclass(frozen=True, eq=False)
class DyadicSystem:
    """Half-open dyadic cubes over a nested net family.

    ``labels[k][x]`` is the index of the level-``k`` center whose cube holds
    ``x``; ``parent[k][b]`` is the level-``k`` parent of level-``k+1``
    center ``b`` (both point indices).
    """

    nets: Nets
    labels: dict
    parent: dict
    seed: int | None = None
    jitter: float = 0.0
    tiebreak: str = "deterministic"

    @property
    def space(self) -> MetricMeasureSpace:
        return self.nets.space

    @property
    def delta(self) -> float:
        return self.nets.delta

    @property
    def k_min(self) -> int:
        return self.nets.k_min

    @property
    def k_max(self) -> int:
        return self.nets.k_max

    @property
    def levels(self) -> range:
        return self.nets.levels

    def centers(self, k: int) -> np.ndarray:
        return self.nets.centers[k]

    def new_labels(self, k: int) -> np.ndarray:
        """Points that become centers at level ``k+1`` (``A_{k+1} \\ A_k``)."""
        return np.setdiff1d(self.nets.centers[k + 1], self.nets.centers[k])

    def cube(self, k: int, alpha: int) -> np.ndarray:
        return np.flatnonzero(self.labels[k] == alpha)

    def children(self, k: int, alpha: int) -> np.ndarray:
        """``L(k, alpha)``: level-``k+1`` centers under ``alpha``."""
        fine = self.nets.centers[k + 1]
        return fine[self.parent[k][fine] == alpha]

    def owner(self, k: int, beta: int) -> int:
        """The level-``k`` cube whose strict-children set holds new label ``beta``."""
        return int(self.parent[k][beta])

    @cached_property
    def cube_mass(self) -> dict:
        w = self.space.weight
        return {k: np.bincount(self.labels[k], weights=w, minlength=self.space.n) for k in self.levels}

    def wavelet_index(self):
        """All ``(k, alpha, beta)`` with ``beta`` a strict child of ``alpha``."""
        for k in range(self.k_min, self.k_max):
            for b in self.new_labels(k):
                yield k, self.owner(k, int(b)), int(b)


def _pick_parent(d: np.ndarray, coarse: np.ndarray, rng, jitter: float) -> int:
    m = d.min()
    if rng is None:
        return int(coarse[np.flatnonzero(d == m)[0]])
    cand = coarse[d <= (1 + jitter) * m]
    return int(cand[rng.integers(len(cand))]) if len(cand) > 1 else int(cand[0])


def build_cubes(nets: Nets, tiebreak: str = "deterministic", seed=None, jitter: float | None = None) -> DyadicSystem:
    """Assign every finer center a nearest coarser parent; cubes are unions of children.

    ``tiebreak="random"`` picks uniformly among centers within ``(1+jitter)``
    times the minimal distance using a generator seeded by ``seed``.
    """
    if tiebreak not in ("deterministic", "random"):
        raise DyadicError(f"unknown tiebreak {tiebreak!r}")
    S = nets.space
    if set(nets.centers) != set(nets.levels) or len(nets.centers[nets.k_max]) == 0:
        raise DyadicError("malformed nets")
    rng = None
    if tiebreak == "random":
        if seed is None:
            raise DyadicError("randomized cubes need a seed")
        rng = np.random.default_rng(seed)
        jitter = DEFAULT_JITTER if jitter is None else float(jitter)
    else:
        jitter = 0.0
    labels = {nets.k_max: np.arange(S.n)}
    parent = {}
    for k in range(nets.k_max - 1, nets.k_min - 1, -1):
        coarse, fine = nets.centers[k], nets.centers[k + 1]
        if not np.all(np.isin(coarse, fine)):
            raise DyadicError(f"nets not nested at level {k}")
        par = np.full(S.n, -1, dtype=int)
        in_coarse = np.zeros(S.n, dtype=bool)
        in_coarse[coarse] = True
        for b in fine:
            par[b] = b if in_coarse[b] else _pick_parent(S.dist[b, coarse], coarse, rng, jitter)
        parent[k] = par
        labels[k] = par[labels[k + 1]]
    for arr in (*labels.values(), *parent.values()):
        arr.setflags(write=False)
    return DyadicSystem(nets, labels, parent, seed, jitter, tiebreak)


def build_system(S: MetricMeasureSpace, delta: float, **kw) -> DyadicSystem:
    k_min, k_max = kw.pop("k_min", None), kw.pop("k_max", None)
    return build_cubes(build_nets(S, delta, k_min, k_max), **kw)


@dataclass
class CheckResult:
    name: str
    passed: bool
    hard: bool = True
    value: float | None = None
    witness: dict | None = None

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "hard": self.hard, "value": self.value, "witness": self.witness}


@dataclass
class GeometryReport:
    checks: list = field(default_factory=list)
    c_in: float = math.inf
    cover_ratio: float = 0.0
    max_children: int = 0

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks if c.hard)

    def __getitem__(self, name):
        return next(c for c in self.checks if c.name == name)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "c_in": None if math.isinf(self.c_in) else self.c_in,
            "cover_ratio": self.cover_ratio,
            "max_children": self.max_children,
            "checks": [c.to_dict() for c in self.checks],
        }


def verify_cubes(D: DyadicSystem, inner_threshold: float = 1 / 24) -> GeometryReport:
    """Exhaustive geometry checks of a dyadic system.

    The inner-ball test with constant 1/3 is hard only when
    ``delta <= inner_threshold``; otherwise ``c_in`` is just measured.
    """
    S, delta = D.space, D.delta
    ids = S.ids
    rep = GeometryReport()

    def fail(name, **w):
        rep.checks.append(CheckResult(name, False, witness=w))

    # separation and covering of nets
    sep_bad = cover_bad = None
    cover_ratio = 0.0
    for k in D.levels:
        c = D.centers(k)
        sub = S.dist[np.ix_(c, c)] + np.diag(np.full(len(c), np.inf))
        if len(c) > 1 and sub.min() < delta**k and sep_bad is None:
            a, b = np.unravel_index(np.argmin(sub), sub.shape)
            sep_bad = dict(level=k, a=ids[c[a]], b=ids[c[b]])
        gap = S.dist[:, c].min(axis=1)
        cover_ratio = max(cover_ratio, float(gap.max() / delta**k))
        if gap.max() >= 2 * delta**k and cover_bad is None:
            cover_bad = dict(level=k, point=ids[int(np.argmax(gap))])
        if k < D.k_max and not np.all(np.isin(c, D.centers(k + 1))):
            fail("nets_nested", level=k)
    rep.cover_ratio = cover_ratio
    rep.checks.append(CheckResult("separation", sep_bad is None, witness=sep_bad))
    rep.checks.append(CheckResult("covering_2delta", cover_bad is None, value=cover_ratio, witness=cover_bad))
    rep.checks.append(CheckResult("covering_delta", cover_ratio < 1, hard=False, value=cover_ratio))

    part_bad = nest_bad = center_bad = child_bad = outer_bad = None
    c_in = math.inf
    outer_c = 2 / (1 - delta)
    max_children = 0
    for k in D.levels:
        lab = D.labels[k]
        c = D.centers(k)
        if not np.all(np.isin(lab, c)) or not np.array_equal(np.unique(lab), np.sort(c)):
            part_bad = part_bad or dict(level=k)
        if not np.all(lab[c] == c):
            center_bad = center_bad or dict(level=k, center=ids[int(c[np.argmax(lab[c] != c)])])
        if k < D.k_max:
            # each finer cube sits inside exactly one coarser cube
            fine = D.labels[k + 1]
            mapped = D.parent[k][fine]
            if not np.array_equal(mapped, lab):
                nest_bad = nest_bad or dict(level=k)
            fc = D.centers(k + 1)
            dpar = S.dist[fc, D.parent[k][fc]]
            if dpar.max() >= 2 * delta**k:
                b = fc[int(np.argmax(dpar))]
                child_bad = child_bad or dict(level=k, child=ids[b], parent=ids[int(D.parent[k][b])])
            max_children = max(max_children, int(np.bincount(D.parent[k][fc], minlength=S.n).max()))
        reach = S.dist[c[:, None], np.arange(S.n)[None, :]]
        own = lab[None, :] == c[:, None]
        far = np.where(own, reach, 0.0).max(axis=1)
        if far.max() >= outer_c * delta**k:
            a = int(np.argmax(far))
            outer_bad = outer_bad or dict(level=k, center=ids[c[a]], radius=float(far[a]))
        if len(c) > 1:
            near_out = np.where(own, np.inf, reach).min(axis=1)
            c_in = min(c_in, float(near_out.min() / delta**k))
    rep.checks += [
        CheckResult("partition", part_bad is None, witness=part_bad),
        CheckResult("nesting", nest_bad is None, witness=nest_bad),
        CheckResult("center_in_cube", center_bad is None, witness=center_bad),
        CheckResult("child_distance", child_bad is None, witness=child_bad),
        CheckResult("outer_ball", outer_bad is None, witness=outer_bad),
    ]
    rep.c_in = c_in
    rep.max_children = max_children
    rep.checks.append(CheckResult("inner_ball_third", c_in >= 1 / 3, hard=delta <= inner_threshold, value=None if math.isinf(c_in) else c_in))
    return rep


def separated_sum_diag(S: MetricMeasureSpace, xi, eps: float, probes=None) -> float:
    """``max_a exp(eps d(a, Xi)/2) sum_b exp(-eps d(a, b))`` after rescaling Xi to be 1-separated."""
    xi = np.array([S.idx(p) for p in xi], dtype=int)
    if xi.size == 0:
        raise DyadicError("empty separated set")
    probes = np.arange(S.n) if probes is None else np.array([S.idx(p) for p in probes], dtype=int)
    scale = 1.0
    if xi.size > 1:
        sub = S.dist[np.ix_(xi, xi)]
        scale = float(sub[~np.eye(xi.size, dtype=bool)].min())
    d = S.dist[np.ix_(probes, xi)] / scale
    vals = np.exp(eps * d.min(axis=1) / 2) * np.exp(-eps * d).sum(axis=1)
    return float(vals.max())


def cube_rows(D: DyadicSystem):
    ids = D.space.ids
    for k in D.levels:
        lab = D.labels[k]
        for p in range(D.space.n):
            yield k, ids[lab[p]], ids[p]


def net_rows(D: DyadicSystem):
    ids = D.space.ids
    for k in D.levels:
        for c in D.centers(k):
            yield k, ids[c]
