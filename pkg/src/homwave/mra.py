"""Spline bases, Gram matrices and the projections of the multiresolution ladder."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import qr

from .dyadic import DyadicSystem, build_cubes

__all__ = [
    "MRAError",
    "SplineBasis",
    "GramReport",
    "SplineReport",
    "build_splines",
    "spline_checks",
    "gram",
    "project_P",
    "project_Q",
    "telescope_check",
    "holder_fit",
]


class MRAError(ValueError):
    pass


@dataclass(eq=False)
class SplineBasis:
    """Per-level spline functions ``s[k]`` (rows indexed like ``system.centers(k)``).

    In smoothed mode ``counts[k]`` keeps the integer replica tallies, so
    ``s[k] == counts[k] / replicas`` and the partition of unity can be
    checked in exact integer arithmetic.
    """

    system: DyadicSystem
    mode: str
    s: dict
    counts: dict | None = None
    replicas: int = 1
    seed: int | None = None
    _eig: dict = field(default_factory=dict, repr=False)

    @property
    def space(self):
        return self.system.space

    @property
    def levels(self):
        return self.system.levels

    @cached_property
    def nu(self) -> dict:
        w = self.space.weight
        return {k: np.array([math.fsum(row * w) for row in self.s[k]]) for k in self.levels}

    @cached_property
    def mu(self) -> dict:
        """``V(x^k_alpha, delta^k)`` per level."""
        S, delta = self.space, self.system.delta
        return {k: np.array([S.volume(c, delta**k) for c in self.system.centers(k)]) for k in self.levels}

    def normalized_spline(self, k: int) -> np.ndarray:
        """Rows ``s^k_alpha / nu^k_alpha``."""
        return self.s[k] / self.nu[k][:, None]

    def spline(self, k: int, alpha) -> np.ndarray:
        a = self.space.idx(alpha)
        row = np.flatnonzero(self.system.centers(k) == a)
        if row.size == 0:
            raise MRAError(f"{alpha!r} is not a level-{k} center")
        return self.s[k][row[0]]

    def gram_matrix(self, k: int) -> np.ndarray:
        sk = self.s[k]
        return (sk * self.space.weight) @ sk.T

    def _eigh(self, k: int):
        if k not in self._eig:
            G = self.gram_matrix(k)
            if np.count_nonzero(G - np.diag(np.diag(G))) == 0:
                # disjoint supports: the normal equations decouple exactly
                if np.diag(G).min() <= 0:
                    raise MRAError(f"Gram matrix at level {k} is singular; dependent centers {_dependent(self, k)}")
                self._eig[k] = (np.diag(G).copy(), None)
                return self._eig[k]
            vals, vecs = np.linalg.eigh(G)
            tol = vals.max() * G.shape[0] * np.finfo(float).eps
            if vals.min() <= tol:
                raise MRAError(f"Gram matrix at level {k} is singular; dependent centers {_dependent(self, k)}")
            self._eig[k] = (vals, vecs)
        return self._eig[k]

    def coefficients(self, k: int, f: np.ndarray) -> np.ndarray:
        """Solve the normal equations ``G c = (f, s^k)``."""
        vals, vecs = self._eigh(k)
        rhs = self.s[k] @ (self.space.weight * f)
        if vecs is None:
            return rhs / vals
        return vecs @ ((vecs.T @ rhs) / vals)

    def P(self, k: int, f: np.ndarray) -> np.ndarray:
        return self.coefficients(k, f) @ self.s[k]

    def P_matrix(self, k: int) -> np.ndarray:
        vals, vecs = self._eigh(k)
        ginv = np.diag(1 / vals) if vecs is None else (vecs / vals) @ vecs.T
        return self.s[k].T @ ginv @ (self.s[k] * self.space.weight)

    def refinement(self, k: int) -> tuple[np.ndarray, float]:
        """Coefficients ``p[alpha, beta]`` with ``s^k_alpha ~ sum_beta p s^{k+1}_beta`` and the max residual.

        Exact 0/1 children incidence in haar mode; least squares otherwise.
        """
        if self.mode == "haar":
            D = self.system
            fine = D.centers(k + 1)
            p = (D.parent[k][fine][None, :] == D.centers(k)[:, None]).astype(float)
        else:
            p, *_ = np.linalg.lstsq(self.s[k + 1].T, self.s[k].T, rcond=None)
            p = p.T
        resid = float(np.abs(p @ self.s[k + 1] - self.s[k]).max())
        return p, resid

    def nesting_defect(self, k: int) -> float:
        """Max residual of projecting each level-``k`` spline onto ``V_{k+1}``."""
        return max(float(np.abs(self.P(k + 1, row) - row).max()) for row in self.s[k])


def _dependent(B: SplineBasis, k: int) -> list:
    _, r, piv = qr(B.s[k].T * np.sqrt(B.space.weight)[:, None], pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int((diag > diag.max() * 1e-10).sum())
    ids = B.space.ids
    return [ids[B.system.centers(k)[j]] for j in piv[rank:]]


def _indicators(D: DyadicSystem, k: int) -> np.ndarray:
    c = D.centers(k)
    return (D.labels[k][None, :] == c[:, None]).astype(float)


def build_splines(D: DyadicSystem, mode: str = "haar", replicas: int = 1, seed=None, jitter=None, systems=None) -> SplineBasis:
    """Haar indicators of cubes, or the replica average of randomized cube systems.

    ``systems`` may pass explicit randomized replicas (they must share ``D``'s nets).
    """
    if mode == "haar":
        return SplineBasis(D, "haar", {k: _indicators(D, k) for k in D.levels})
    if mode != "smoothed":
        raise MRAError(f"unknown spline mode {mode!r}")
    if systems is None:
        if replicas < 1:
            raise MRAError("smoothed mode needs at least one replica")
        if seed is None:
            raise MRAError("smoothed mode needs a seed")
        children = np.random.SeedSequence(seed).spawn(replicas)
        systems = [build_cubes(D.nets, "random", seed=ss, jitter=jitter) for ss in children]
    if len(systems) == 0:
        raise MRAError("smoothed mode needs at least one replica")
    for R in systems:
        if R.nets is not D.nets and any(not np.array_equal(R.nets.centers.get(k, []), D.centers(k)) for k in D.levels):
            raise MRAError("replica systems do not share the base nets")
    counts = {k: sum(_indicators(R, k) for R in systems).astype(np.int64) for k in D.levels}
    n_rep = len(systems)
    s = {k: counts[k] / n_rep for k in D.levels}
    return SplineBasis(D, "smoothed", s, counts, n_rep, seed)


@dataclass
class SplineReport:
    partition_error: float
    partition_exact: bool
    interpolation_error: float
    support_ratio: float
    support_ok: bool
    refinement_residual: float
    holder: dict
    nesting_defect: dict
    witness: dict | None = None

    @property
    def ok(self) -> bool:
        return self.partition_exact and self.interpolation_error == 0 and self.support_ok and (self.refinement_residual == 0 or math.isnan(self.refinement_residual))

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["ok"] = self.ok
        return d


def holder_fit(values: np.ndarray, dist: np.ndarray, scale: float) -> tuple[float, float]:
    """Largest ``eta`` in [0, 1] with ``|v(x)-v(y)| <= C (d/scale)^eta`` and ``C <= max jump``.

    Among pairs with ``0 < d <= scale`` the constraint ``C(eta) <= C(0)``
    reduces to a closed form in logs; returns ``(C_hat, eta_hat)``.
    """
    diff = np.abs(values[:, None] - values[None, :])
    mask = (dist > 0) & (dist <= scale)
    if not mask.any():
        return 0.0, 1.0
    jumps = diff[mask]
    ratio = dist[mask] / scale
    c0 = float(jumps.max())
    if c0 == 0:
        return 0.0, 1.0
    strict = (ratio < 1) & (jumps > 0)
    eta = 1.0
    if strict.any():
        eta = float(np.min(np.log(jumps[strict] / c0) / np.log(ratio[strict])))
    eta = float(np.clip(eta, 0.0, 1.0)) + 0.0
    c = float(np.max(jumps / ratio**eta))
    return c, eta


def spline_checks(B: SplineBasis) -> SplineReport:
    """Partition of unity, interpolation, support radius, refinement and Hölder fits."""
    D, S = B.system, B.space
    delta = D.delta
    part_err, interp_err, support_ratio = 0.0, 0.0, 0.0
    exact = True
    witness = None
    holder, defect = {}, {}
    refine = 0.0 if B.mode == "haar" else math.nan
    for k in B.levels:
        sk = B.s[k]
        if B.counts is not None:
            exact_k = bool(np.all(B.counts[k].sum(axis=0) == B.replicas))
        else:
            exact_k = bool(np.all(sk.sum(axis=0) == 1.0))
        sums = np.array([math.fsum(col) for col in sk.T])
        err = float(np.abs(sums - 1.0).max())
        if (not exact_k or err > 0) and witness is None:
            witness = {"check": "partition", "level": k, "point": S.ids[int(np.argmax(np.abs(sums - 1)))]}
        exact = exact and exact_k and err == 0
        part_err = max(part_err, err)
        c = D.centers(k)
        ie = float(np.abs(sk[:, c] - np.eye(len(c))).max())
        if ie > 0 and witness is None:
            witness = {"check": "interpolation", "level": k}
        interp_err = max(interp_err, ie)
        reach = np.where(sk > 0, S.dist[c], 0.0).max()
        support_ratio = max(support_ratio, float(reach / delta**k))
        holder[k] = max((holder_fit(row, S.dist, delta**k) for row in sk), key=lambda ce: -ce[1])
        if k < D.k_max:
            if B.mode == "haar":
                _, res = B.refinement(k)
                refine = max(refine, res)
            else:
                defect[k] = B.nesting_defect(k)
    eta = min(e for _, e in holder.values())
    return SplineReport(
        part_err,
        exact,
        interp_err,
        support_ratio,
        support_ratio < 8,
        refine,
        {"eta_hat": eta, "per_level": {k: {"C": c, "eta": e} for k, (c, e) in holder.items()}},
        defect,
        witness,
    )


@dataclass
class GramReport:
    level: int
    matrix: np.ndarray
    condition: float
    riesz_lower: float
    riesz_upper: float

    def to_dict(self) -> dict:
        return {
            "schema": "gram/v1",
            "level": self.level,
            "eigen_min": self.riesz_lower,
            "eigen_max": self.riesz_upper,
            "condition_number": self.condition,
        }


def gram(B: SplineBasis, k: int) -> GramReport:
    """Gram report at level ``k``; Riesz bounds come from the nu-normalized Gram."""
    if k not in B.s:
        raise MRAError(f"level {k} out of range")
    G = B.gram_matrix(k)
    mu = B.mu[k]
    M = G / np.sqrt(np.outer(mu, mu))
    nu = B.nu[k]
    N = G / np.sqrt(np.outer(nu, nu))
    ev = np.linalg.eigvalsh(N)
    if ev.min() <= ev.max() * N.shape[0] * np.finfo(float).eps:
        raise MRAError(f"Gram matrix at level {k} is rank-deficient; dependent centers {_dependent(B, k)}")
    return GramReport(k, M, float(ev.max() / ev.min()), float(ev.min()), float(ev.max()))


def _check_level(B: SplineBasis, k: int, top: int):
    if not B.system.k_min <= k <= top:
        raise MRAError(f"level {k} outside [{B.system.k_min}, {top}]")


def project_P(B: SplineBasis, k: int, f) -> np.ndarray:
    """Orthogonal projection onto ``V_k`` in the weighted inner product."""
    _check_level(B, k, B.system.k_max)
    return B.P(k, B.space.function(f))


def project_Q(B: SplineBasis, k: int, f) -> np.ndarray:
    """``Q_k f = P_{k+1} f - P_k f``."""
    _check_level(B, k, B.system.k_max - 1)
    f = B.space.function(f)
    return B.P(k + 1, f) - B.P(k, f)


def telescope_check(B: SplineBasis, f, level: int) -> float:
    """Sup-norm residual of ``f - P_l f - sum_{k=l}^{k_max-1} Q_k f``."""
    _check_level(B, level, B.system.k_max)
    f = B.space.function(f)
    acc = B.P(level, f)
    for k in range(level, B.system.k_max):
        acc = acc + (B.P(k + 1, f) - B.P(k, f))
    return float(np.abs(f - acc).max())
