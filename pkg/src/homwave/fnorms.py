"""Function-space quantities on finite spaces: L^p, BMO, Carleson, wavelet H^1, L^log,
an approximate grand maximal function, atoms and molecules."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dyadic import DyadicSystem
from .space import CRITICAL_EPS, MetricMeasureSpace
from .wavelet import CoeffSeq, WaveletBasis, analyze

__all__ = [
    "NormError",
    "NormValue",
    "Atom",
    "Molecule",
    "ValidationResult",
    "GrandMaximal",
    "lp_norm",
    "bmo_norm",
    "bmo_plus",
    "carleson_norm",
    "h1_wavelet_norms",
    "llog_norm",
    "llog_functional",
    "grand_maximal",
    "make_atom",
    "validate_atom",
    "validate_molecule",
    "molecule_eta_constant",
    "atomic_norm_upper",
    "smallest_ball",
]


class NormError(ValueError):
    pass


@dataclass
class NormValue:
    """A norm together with where it was attained."""

    norm: str
    value: float
    witness: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def __float__(self):
        return self.value

    def to_dict(self) -> dict:
        return {"schema": "norm/v1", "norm": self.norm, "value": self.value, "witness": self.witness, "params": self.params}


def lp_norm(S: MetricMeasureSpace, f, p=2.0) -> float:
    f = S.function(f)
    if p == math.inf or p == "inf":
        return float(np.abs(f).max())
    p = float(p)
    if p < 1:
        raise NormError(f"p must be >= 1, got {p}")
    return float(np.dot(np.abs(f) ** p, S.weight) ** (1 / p))


def bmo_norm(S: MetricMeasureSpace, g) -> NormValue:
    """Sup of mean oscillation over every ball (centers x critical radii)."""
    g = S.function(g)
    order, sd, _ = S._sorted
    best, wit = 0.0, {}
    for x in range(S.n):
        idx = order[x]
        w = S.weight[idx]
        v = g[idx]
        # balls around x are prefixes of the sorted row, cut where the distance changes
        ends = np.flatnonzero(np.r_[sd[x][1:] != sd[x][:-1], True]) + 1
        cw = np.cumsum(w)[ends - 1]
        mean = np.cumsum(w * v)[ends - 1] / cw
        tri = np.arange(S.n)[None, :] < ends[:, None]
        osc = (np.abs(v[None, :] - mean[:, None]) * w * tri).sum(axis=1) / cw
        j = int(np.argmax(osc))
        if osc[j] > best:
            best = float(osc[j])
            wit = {"center": S.ids[x], "radius": float(sd[x][ends[j] - 1] * (1 + CRITICAL_EPS)), "size": int(ends[j])}
    return NormValue("bmo", best, wit)


def bmo_plus(S: MetricMeasureSpace, g, x1=None) -> NormValue:
    """BMO norm plus the normalized local L1 mass on ``B(x1, r)``, ``r`` = median pairwise distance."""
    g = S.function(g)
    x1 = S.base_point if x1 is None else S.idx(x1)
    r = S.median_distance
    ball = S.ball(x1, r)
    local = float(np.dot(np.abs(g[ball]), S.weight[ball]) / S.weight[ball].sum())
    b = bmo_norm(S, g)
    return NormValue("bmo_plus", b.value + local, b.witness, {"x1": S.ids[x1], "radius": r, "local": local})


def carleson_norm(D: DyadicSystem, c: CoeffSeq) -> NormValue:
    """Sup over cubes of ``(mu(Q)^{-1} sum_{j >= k, y_beta in Q} |b|^2)^{1/2}``."""
    W = c.basis
    if W.system is not D and W.system.space is not D.space:
        raise NormError("coefficients are indexed by a different dyadic system")
    sq = c.wavelet**2
    best, wit = 0.0, {}
    for k in D.levels:
        sel = W.levels >= k
        cubes = D.labels[k][W.labels[sel]]
        tot = np.bincount(cubes, weights=sq[sel], minlength=D.space.n).astype(float)
        mass = D.cube_mass[k]
        ratio = np.divide(tot, mass, out=np.zeros_like(tot), where=mass > 0)
        a = int(np.argmax(ratio))
        if ratio[a] > best:
            best, wit = float(ratio[a]), {"level": k, "center": D.space.ids[a]}
    return NormValue("carleson", math.sqrt(best), wit)


def h1_wavelet_norms(W: WaveletBasis, f, eps0: float | None = None) -> tuple[float, float, float]:
    """Square-function L1 norms built from ``|psi|``, cube indicators and the small balls ``W``.

    Warns if ``f`` is not mean-zero.
    """
    S, D = W.space, W.system
    f = S.function(f)
    if abs(np.dot(f, S.weight)) > 1e-10 * max(1.0, lp_norm(S, f, 1)):
        warnings.warn("h1_wavelet_norms: input is not mean-zero", stacklevel=2)
    c2 = analyze(W, f).wavelet ** 2
    w = S.weight
    sq3 = c2 @ W.psi**2
    cube = np.zeros((len(W), S.n))
    small = np.zeros((len(W), S.n))
    eps0 = W.eps0 if eps0 is None else eps0
    for i, ((k, b), a) in enumerate(zip(W.index, W.owners)):
        inq = D.labels[k] == a
        cube[i] = inq / W.owner_mass[i]
        small[i] = (inq & (S.dist[b] < eps0 * D.delta**k)) / W.owner_mass[i]
    n3 = float(np.dot(np.sqrt(sq3), w))
    n4 = float(np.dot(np.sqrt(c2 @ cube), w))
    n5 = float(np.dot(np.sqrt(c2 @ small), w))
    return n3, n4, n5


def llog_functional(S: MetricMeasureSpace, f, lam: float, x0=None) -> float:
    """Musielak-Orlicz modular of ``f / lam`` with the ``log(e + d(x0, x))`` weight."""
    x0 = S.base_point if x0 is None else S.idx(x0)
    t = np.abs(S.function(f)) / lam
    return float(np.dot(t / (np.log(math.e + t) + np.log(math.e + S.dist[x0])), S.weight))


def llog_norm(S: MetricMeasureSpace, f, x0=None, rtol: float = 1e-8) -> float:
    """Luxemburg norm by bisection; the returned ``lam`` satisfies functional <= 1."""
    f = S.function(f)
    if not np.any(f):
        return 0.0
    phi = lambda lam: llog_functional(S, f, lam, x0)
    lo = hi = max(float(np.abs(f).max()), 1e-300)
    while phi(hi) > 1:
        hi *= 2
    while phi(lo) <= 1:
        lo /= 2
    while (hi - lo) > rtol * hi:
        mid = 0.5 * (lo + hi)
        if phi(mid) > 1:
            lo = mid
        else:
            hi = mid
    return hi


class GrandMaximal:
    """Lower approximation of the grand maximal function by normalized bumps.

    For each center ``x`` and radius ``r`` the bump
    ``h(y) = [V_r(x) + V(x,y)]^{-1} (r / (r + d(x,y)))^gamma`` is scaled by the
    largest constant keeping both test-function constants at most 1. The
    bump matrix does not depend on ``f`` and is built once.
    """

    def __init__(self, S: MetricMeasureSpace, beta: float = 0.5, gamma: float = 0.5, radius_grid=None):
        if not (0 < beta <= 1 and 0 < gamma <= 1):
            raise NormError("beta and gamma must lie in (0, 1]")
        self.space, self.beta, self.gamma = S, beta, gamma
        rows, owners, radii = [], [], []
        d = S.dist
        for x in range(S.n):
            if radius_grid is None:
                rs = np.unique(d[x][d[x] > 0])
                rs = np.r_[S.min_distance / 2, rs]
            else:
                rs = np.asarray(radius_grid, dtype=float)
            env = self._envelope(x, rs)
            scale = self._t2_constants(x, rs, env)
            rows.append(env / np.maximum(1.0, scale)[:, None])
            owners.append(np.full(len(rs), x))
            radii.append(rs)
        self.H = np.vstack(rows)
        self.owner = np.concatenate(owners)
        self.radius = np.concatenate(radii)

    def _envelope(self, x: int, rs: np.ndarray) -> np.ndarray:
        S = self.space
        vr = S.volume(x, rs)
        vxy = S.pair_volume[x]
        dx = S.dist[x]
        return 1.0 / (vr[:, None] + vxy[None, :]) * (rs[:, None] / (rs[:, None] + dx[None, :])) ** self.gamma

    def _t2_constants(self, x: int, rs: np.ndarray, env: np.ndarray) -> np.ndarray:
        d = self.space.dist
        dx = d[x]
        pos = d > 0
        out = np.zeros(len(rs))
        for j, r in enumerate(rs):
            h = env[j]
            reach = (r + dx)[:, None]
            ok = pos & (d <= reach / 2)
            if not ok.any():
                continue
            num = np.abs(h[:, None] - h[None, :])
            den = (d / reach) ** self.beta * h[:, None]
            out[j] = float(np.max(num[ok] / den[ok]))
        return out

    def __call__(self, f) -> np.ndarray:
        S = self.space
        vals = np.abs(self.H @ (S.weight * S.function(f)))
        out = np.zeros(S.n)
        np.maximum.at(out, self.owner, vals)
        return out


def grand_maximal(S: MetricMeasureSpace, f, beta: float = 0.5, gamma: float = 0.5, radius_grid=None) -> np.ndarray:
    return GrandMaximal(S, beta, gamma, radius_grid)(f)


@dataclass
class Atom:
    function: np.ndarray
    center: int
    radius: float
    q: float
    space: MetricMeasureSpace

    @property
    def ball(self) -> np.ndarray:
        return self.space.ball(self.center, self.radius)


@dataclass
class Molecule:
    function: np.ndarray
    center: int
    radius: float
    q: float
    eta: np.ndarray
    space: MetricMeasureSpace


@dataclass
class ValidationResult:
    passed: bool
    clauses: dict
    witness: dict | None = None

    def __bool__(self):
        return self.passed


def _lq(S, f, q) -> float:
    return lp_norm(S, f, math.inf if q == math.inf else q)


def make_atom(S: MetricMeasureSpace, center, radius: float, q: float = 2.0, seed=None) -> Atom:
    """Random mean-zero function on ``B(center, radius)`` saturating the size bound."""
    c = S.idx(center)
    ball = S.ball(c, radius)
    if ball.sum() < 2:
        raise NormError("an atom needs a ball with at least two points")
    rng = np.random.default_rng(seed)
    a = np.zeros(S.n)
    a[ball] = rng.standard_normal(int(ball.sum()))
    a[ball] -= np.dot(a[ball], S.weight[ball]) / S.weight[ball].sum()
    mass = S.weight[ball].sum()
    target = mass ** (1 / q - 1) if q != math.inf else 1 / mass
    a *= target / _lq(S, a, q)
    return Atom(a, c, float(radius), q, S)


def validate_atom(atom: Atom, rtol: float = 1e-12) -> ValidationResult:
    S, a, q = atom.space, atom.function, atom.q
    ball = atom.ball
    mass = S.weight[ball].sum()
    support = bool(np.all(a[~ball] == 0))
    bound = mass ** (1 / q - 1) if q != math.inf else 1 / mass
    size = _lq(S, a, q)
    integral = float(np.dot(a, S.weight))
    mean_ok = abs(integral) <= 1e-12 * max(1.0, lp_norm(S, a, 1))
    clauses = {"support": support, "size": size <= bound * (1 + rtol), "mean_zero": mean_ok}
    witness = None
    if not support:
        witness = {"clause": "support", "point": S.ids[int(np.argmax((a != 0) & ~ball))]}
    elif not clauses["size"]:
        witness = {"clause": "size", "norm": size, "bound": bound}
    elif not mean_ok:
        witness = {"clause": "mean_zero", "integral": integral}
    return ValidationResult(all(clauses.values()), {**clauses, "size_ratio": size / bound}, witness)


def _annuli(S: MetricMeasureSpace, center: int, radius: float):
    d = S.dist[center]
    k = 1
    while 2 ** (k - 1) * radius <= S.diameter:
        yield k, (d < 2**k * radius) & (d >= 2 ** (k - 1) * radius)
        k += 1


def validate_molecule(m: Molecule, rtol: float = 1e-12) -> ValidationResult:
    """Check the size, annular decay and cancellation clauses."""
    S, q = m.space, m.q
    base = S.volume(m.center, m.radius)
    bound = base ** (1 / q - 1) if q != math.inf else 1 / base
    eta = np.asarray(m.eta, dtype=float)
    summable = bool(np.all(eta >= 0))
    size = _lq(S, m.function, q)
    clauses = {"summable": summable, "size": size <= bound * (1 + rtol)}
    witness = None if clauses["size"] else {"clause": "size", "norm": size, "bound": bound}
    decay_ok = True
    for k, ring in _annuli(S, m.center, m.radius):
        ek = eta[k - 1] if k - 1 < len(eta) else 0.0
        val = _lq(S, m.function * ring, q)
        lim = ek * 2 ** (k * (1 / q - 1)) * bound
        if val > lim * (1 + rtol) + 1e-300:
            decay_ok = False
            witness = witness or {"clause": "annulus", "k": k, "norm": val, "bound": lim}
    clauses["annuli"] = decay_ok
    integral = float(np.dot(m.function, S.weight))
    clauses["mean_zero"] = abs(integral) <= 1e-12 * max(1.0, lp_norm(S, m.function, 1))
    if not clauses["mean_zero"]:
        witness = witness or {"clause": "mean_zero", "integral": integral}
    return ValidationResult(all(clauses.values()), clauses, witness)


def molecule_eta_constant(S: MetricMeasureSpace, f, center, radius: float, q: float = 2.0, decay=lambda k: 2.0**-k) -> float:
    """Smallest ``C`` for which ``eta_k = C decay(k)`` satisfies every annulus bound."""
    c = S.idx(center)
    base = S.volume(c, radius)
    bound = base ** (1 / q - 1) if q != math.inf else 1 / base
    C = 0.0
    for k, ring in _annuli(S, c, radius):
        val = _lq(S, f * ring, q)
        C = max(C, val / (decay(k) * 2 ** (k * (1 / q - 1)) * bound))
    return C


def smallest_ball(S: MetricMeasureSpace, support: np.ndarray) -> tuple[int, float, float]:
    """Least-mass open ball containing ``support``: ``(center, radius, mass)``."""
    pts = np.flatnonzero(support)
    reach = S.dist[:, pts].max(axis=1)
    masses = np.array([S.weight[S.dist[z] <= reach[z]].sum() for z in range(S.n)])
    z = int(np.argmin(masses))
    return z, float(reach[z] * (1 + CRITICAL_EPS)) if reach[z] > 0 else S.min_distance / 2, float(masses[z])


def _atom_cost(S, g, q) -> float:
    supp = g != 0
    if not supp.any():
        return 0.0
    _, _, mass = smallest_ball(S, supp)
    return _lq(S, g, q) * mass ** (1 - 1 / q) if q != math.inf else _lq(S, g, q) * mass


def atomic_norm_upper(W: WaveletBasis, f, q: float = 2.0) -> NormValue:
    """Upper bound for the atomic H^1 norm from a finite atomic decomposition.

    Wavelet terms sharing a parent cube are grouped into one atom each; the
    whole function is also tried as a single atom and the cheaper total wins.
    """
    S = W.space
    f = S.function(f)
    if abs(np.dot(f, S.weight)) > 1e-10 * max(1.0, lp_norm(S, f, 1)):
        raise NormError("atomic decomposition needs a mean-zero function")
    if not np.any(f):
        return NormValue("atomic_upper", 0.0, {"atoms": 0}, {"q": q})
    c = analyze(W, f).wavelet
    groups = {}
    for i, ((k, _), a) in enumerate(zip(W.index, W.owners)):
        if c[i] != 0:
            groups.setdefault((k, int(a)), []).append(i)
    grouped = 0.0
    for rows in groups.values():
        g = c[rows] @ W.psi[rows]
        g[np.abs(g) < 1e-15 * np.abs(g).max()] = 0.0
        grouped += _atom_cost(S, g, q)
    single = _atom_cost(S, f, q)
    if single <= grouped:
        return NormValue("atomic_upper", single, {"atoms": 1, "grouped": grouped}, {"q": q, "upper_bound": True})
    return NormValue("atomic_upper", grouped, {"atoms": len(groups), "single": single}, {"q": q, "upper_bound": True})
