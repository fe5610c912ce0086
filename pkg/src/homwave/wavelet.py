"""Orthonormal wavelets for the Haar multiresolution ladder and coefficient transforms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .mra import SplineBasis, build_splines, holder_fit

__all__ = [
    "WaveletError",
    "WaveletBasis",
    "CoeffSeq",
    "WaveletReport",
    "build_wavelets",
    "analyze",
    "synthesize",
    "wavelet_checks",
    "symmetric_orthonormalize",
    "ESTIMATE_THRESHOLD",
]

#: Reporting constant for the measured lower-bound radius.
ESTIMATE_THRESHOLD = 0.1


class WaveletError(ValueError):
    pass


def symmetric_orthonormalize(cands: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """Löwdin orthonormalization ``G^{-1/2} C`` of the rows of ``cands``."""
    G = (cands * weight) @ cands.T
    if np.count_nonzero(G - np.diag(np.diag(G))) == 0:
        if np.diag(G).min() <= 0:
            raise np.linalg.LinAlgError("candidate Gram is rank-deficient")
        return cands / np.sqrt(np.diag(G))[:, None]
    vals, vecs = np.linalg.eigh(G)
    if vals.min() <= vals.max() * len(vals) * 1e-12:
        raise np.linalg.LinAlgError("candidate Gram is rank-deficient")
    return (vecs / np.sqrt(vals)) @ vecs.T @ cands


@dataclass(eq=False)
class WaveletBasis:
    """Wavelets stacked as rows of ``psi`` with ``index[i] = (k, beta)`` (point index).

    Rows are ordered by level, then by point order of the new label.
    ``coarse`` holds an orthonormal basis of ``V_{k_min}``; ``coarse_index``
    names the level-``k_min`` center each coarse row started from.
    """

    splines: SplineBasis
    psi: np.ndarray
    index: list
    coarse: np.ndarray
    coarse_index: list
    _fits: dict = field(default_factory=dict, repr=False)

    @property
    def system(self):
        return self.splines.system

    @property
    def space(self):
        return self.splines.space

    def __len__(self):
        return len(self.index)

    @cached_property
    def position(self) -> dict:
        return {kb: i for i, kb in enumerate(self.index)}

    @cached_property
    def levels(self) -> np.ndarray:
        return np.array([k for k, _ in self.index], dtype=int)

    @cached_property
    def labels(self) -> np.ndarray:
        return np.array([b for _, b in self.index], dtype=int)

    @cached_property
    def owners(self) -> np.ndarray:
        """Level-``k`` cube center owning each wavelet."""
        D = self.system
        return np.array([D.owner(k, b) for k, b in self.index], dtype=int)

    @cached_property
    def owner_mass(self) -> np.ndarray:
        D = self.system
        return np.array([D.cube_mass[k][a] for (k, _), a in zip(self.index, self.owners)])

    @cached_property
    def analysis_matrix(self) -> np.ndarray:
        """Rows: coarse functions then wavelets."""
        return np.vstack([self.coarse, self.psi])

    def level_rows(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.levels == k)

    def wavelet(self, k: int, beta) -> np.ndarray:
        return self.psi[self.position[(k, self.space.idx(beta))]]

    def triples(self):
        """Iterate ``(k, alpha, beta)`` over the double-index wavelet family."""
        for (k, b), a in zip(self.index, self.owners):
            yield k, int(a), b

    @property
    def fits(self) -> dict:
        if not self._fits:
            self._fits.update(_fit_decay(self))
            self._fits["eps0"] = _measure_eps0(self)
            self._fits["eta_hat"] = _wavelet_holder(self)
        return self._fits

    @property
    def nu_hat(self) -> float:
        return self.fits["pooled"]["nu"]

    @property
    def eps0(self) -> float:
        return self.fits["eps0"]


def build_wavelets(B: SplineBasis) -> WaveletBasis:
    """Per level orthonormalize ``Q_k(s^{k+1}_beta / sqrt(nu))`` over the new labels."""
    if B.mode != "haar":
        raise WaveletError("wavelets need a haar-mode spline basis")
    D, S = B.system, B.space
    w = S.weight
    rows, index = [], []
    for k in range(D.k_min, D.k_max):
        new = D.new_labels(k)
        if new.size == 0:
            continue
        fine = D.centers(k + 1)
        pos = np.searchsorted(fine, new)
        cands = B.s[k + 1][pos] / np.sqrt(B.nu[k + 1][pos])[:, None]
        Pk = B.P_matrix(k)
        cands = cands - cands @ Pk.T
        # candidates under different parents have disjoint supports
        owner = D.parent[k][new]
        psi = np.zeros_like(cands)
        for a in np.unique(owner):
            grp = np.flatnonzero(owner == a)
            cube = D.labels[k] == a
            block = np.zeros_like(cands[grp])
            try:
                block[:, cube] = symmetric_orthonormalize(cands[grp][:, cube], w[cube])
            except np.linalg.LinAlgError:
                raise WaveletError(f"level {k}: candidate Gram is rank-deficient (|G_k| = {new.size})") from None
            psi[grp] = block
        at_y = psi[np.arange(len(new)), new]
        if np.any(at_y == 0):
            bad = S.ids[int(new[np.argmax(at_y == 0)])]
            raise WaveletError(f"level {k}: wavelet vanishes at its new point {bad}")
        psi *= np.sign(at_y)[:, None]
        rows.append(psi)
        index += [(k, int(b)) for b in new]
    k0 = D.k_min
    base = B.s[k0] / np.sqrt(B.nu[k0])[:, None]
    coarse = symmetric_orthonormalize(base, w)
    psi = np.vstack(rows) if rows else np.zeros((0, S.n))
    return WaveletBasis(B, psi, index, coarse, [int(c) for c in D.centers(k0)])


@dataclass(eq=False)
class CoeffSeq:
    wavelet: np.ndarray
    coarse: np.ndarray
    basis: WaveletBasis

    @property
    def entries(self) -> dict:
        return {kb: float(v) for kb, v in zip(self.basis.index, self.wavelet)}

    def __getitem__(self, key):
        k, b = key
        return float(self.wavelet[self.basis.position[(k, self.basis.space.idx(b))]])

    def energy(self) -> float:
        return float(np.sum(self.wavelet**2) + np.sum(self.coarse**2))

    def rows(self):
        """CSV rows ``kind, level, beta_id, value``."""
        ids = self.basis.space.ids
        k0 = self.basis.system.k_min
        for c, v in zip(self.basis.coarse_index, self.coarse):
            yield "coarse", k0, ids[c], float(v)
        for (k, b), v in zip(self.basis.index, self.wavelet):
            yield "wavelet", k, ids[b], float(v)

    @classmethod
    def from_rows(cls, W: WaveletBasis, rows) -> "CoeffSeq":
        wav = np.zeros(len(W))
        coarse = np.zeros(len(W.coarse))
        cpos = {c: i for i, c in enumerate(W.coarse_index)}
        seen = set()
        for kind, level, beta, value in rows:
            b = W.space.idx(beta)
            key = (kind, int(level), b)
            if key in seen:
                raise WaveletError(f"duplicate coefficient {kind} {level} {beta}")
            seen.add(key)
            if kind == "coarse":
                if int(level) != W.system.k_min or b not in cpos:
                    raise WaveletError(f"no coarse function at {level}/{beta}")
                coarse[cpos[b]] = float(value)
            elif kind == "wavelet":
                if (int(level), b) not in W.position:
                    raise WaveletError(f"no wavelet at {level}/{beta}")
                wav[W.position[(int(level), b)]] = float(value)
            else:
                raise WaveletError(f"unknown coefficient kind {kind!r}")
        return cls(wav, coarse, W)


def analyze(W: WaveletBasis, f) -> CoeffSeq:
    f = W.space.function(f)
    wf = W.space.weight * f
    return CoeffSeq(W.psi @ wf, W.coarse @ wf, W)


def synthesize(W: WaveletBasis, c: CoeffSeq) -> np.ndarray:
    if c.basis is not W:
        if c.basis.space is not W.space or len(c.wavelet) != len(W):
            raise WaveletError("coefficients belong to a different basis")
    return c.wavelet @ W.psi + c.coarse @ W.coarse


def _decay_samples(W: WaveletBasis):
    """Per wavelet: scaled distance ``t`` and ``log(|psi| sqrt(V(y, delta^k)))`` where psi != 0."""
    S, delta = W.space, W.system.delta
    out = []
    for i, (k, b) in enumerate(W.index):
        v = W.psi[i]
        nz = np.abs(v) > 0
        t = S.dist[b, nz] / delta**k
        y = np.log(np.abs(v[nz]) * math.sqrt(S.volume(b, delta**k)))
        out.append((k, t, y))
    return out


def _fit(t: np.ndarray, y: np.ndarray) -> dict:
    if t.size < 2 or np.ptp(t) == 0:
        nu = 0.0
    else:
        slope = np.polyfit(t, y, 1)[0]
        nu = max(float(-slope), 0.0) + 0.0
    logc = float(np.max(y + nu * t))
    viol = float(np.mean(y > logc - nu * t + 1e-12)) if t.size else 0.0
    return {"C": math.exp(logc), "nu": nu, "violations": viol, "samples": int(t.size)}


def _fit_decay(W: WaveletBasis) -> dict:
    samples = _decay_samples(W)
    per = {}
    for k in sorted({k for k, _, _ in samples}):
        t = np.concatenate([s[1] for s in samples if s[0] == k])
        y = np.concatenate([s[2] for s in samples if s[0] == k])
        per[k] = _fit(t, y)
    if samples:
        pooled = _fit(np.concatenate([s[1] for s in samples]), np.concatenate([s[2] for s in samples]))
    else:
        pooled = {"C": 0.0, "nu": 0.0, "violations": 0.0, "samples": 0}
    return {"per_level": per, "pooled": pooled, "samples": samples}


def _measure_eps0(W: WaveletBasis, threshold: float = ESTIMATE_THRESHOLD) -> float:
    """Largest rho with ``|psi| >= threshold / sqrt(mu(Q))`` on ``B(y, rho delta^k)`` for every wavelet."""
    S, delta = W.space, W.system.delta
    eps = math.inf
    for i, (k, b) in enumerate(W.index):
        low = np.abs(W.psi[i]) < threshold / math.sqrt(W.owner_mass[i])
        if low.any():
            eps = min(eps, float(S.dist[b, low].min() / delta**k))
    return eps


def _wavelet_holder(W: WaveletBasis) -> float:
    S, delta = W.space, W.system.delta
    eta = 1.0
    for i, (k, b) in enumerate(W.index):
        scale = math.sqrt(S.volume(b, delta**k))
        _, e = holder_fit(W.psi[i] * scale, S.dist, delta**k)
        eta = min(eta, e)
    return eta


@dataclass
class WaveletReport:
    orthonormality_error: float
    moment_error: float
    span_error: float
    roundtrip_error: float
    sign_ok: bool
    index_ok: bool
    decay: dict
    eps0: float
    eta_hat: float
    smoothed: dict | None = None
    witness: dict | None = None

    @property
    def ok(self) -> bool:
        return (
            self.orthonormality_error <= 1e-10
            and self.moment_error <= 1e-12
            and self.span_error <= 1e-10
            and self.roundtrip_error <= 1e-10
            and self.sign_ok
            and self.index_ok
        )

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["eps0"] = None if math.isinf(self.eps0) else self.eps0
        d["decay"] = {
            "pooled": self.decay["pooled"],
            "per_level": {str(k): v for k, v in self.decay["per_level"].items()},
        }
        d["ok"] = self.ok
        return d


def _smoothed_companion(W: WaveletBasis, B: SplineBasis) -> dict:
    """Decay and Hölder fits for wavelets orthonormalized from smoothed candidates (report only)."""
    D, S = W.system, W.space
    w = S.weight
    rows, index = [], []
    for k in range(D.k_min, D.k_max):
        new = D.new_labels(k)
        if new.size == 0:
            continue
        pos = np.searchsorted(D.centers(k + 1), new)
        cands = B.s[k + 1][pos] / np.sqrt(B.nu[k + 1][pos])[:, None]
        try:
            cands = cands - cands @ B.P_matrix(k).T
            rows.append(symmetric_orthonormalize(cands, w))
        except (np.linalg.LinAlgError, ValueError):
            continue
        index += [(k, int(b)) for b in new]
    if not rows:
        return {"levels": 0}
    fake = WaveletBasis(W.splines, np.vstack(rows), index, W.coarse, W.coarse_index)
    fits = _fit_decay(fake)
    return {"pooled": fits["pooled"], "eta_hat": _wavelet_holder(fake), "levels": len(rows)}


def wavelet_checks(W: WaveletBasis, smoothed_companion: SplineBasis | None = None, rng_seed: int = 0) -> WaveletReport:
    """Assert the algebraic invariants and measure decay, Hölder and lower-bound constants."""
    S, D, B = W.space, W.system, W.splines
    w = S.weight
    A = W.analysis_matrix
    orth = float(np.abs((A * w) @ A.T - np.eye(len(A))).max()) if len(A) else 0.0
    moments = np.abs(W.psi @ w)
    moment = float(moments.max()) if len(W) else 0.0
    span = 0.0
    for k in range(D.k_min, D.k_max):
        r = W.level_rows(k)
        Qk = B.P_matrix(k + 1) - B.P_matrix(k)
        rec = W.psi[r].T @ (W.psi[r] * w) if r.size else np.zeros_like(Qk)
        span = max(span, float(np.abs(rec - Qk).max()))
    rng = np.random.default_rng(rng_seed)
    f = rng.standard_normal(S.n)
    rt = float(np.abs(synthesize(W, analyze(W, f)) - f).max() / np.abs(f).max())
    sign = bool(all(W.psi[i, b] > 0 for i, (_, b) in enumerate(W.index)))
    idx_ok = all(
        set(int(b) for b in D.new_labels(k))
        == {int(b) for a in D.centers(k) for b in D.children(k, int(a)) if len(D.children(k, int(a))) > 1 and b != a}
        for k in range(D.k_min, D.k_max)
    )
    witness = None
    if len(W) and moment > 1e-12:
        k, b = W.index[int(np.argmax(moments))]
        witness = {"check": "moment", "level": k, "beta": S.ids[b]}
    fits = W.fits
    decay = {"per_level": fits["per_level"], "pooled": fits["pooled"]}
    smooth = _smoothed_companion(W, smoothed_companion) if smoothed_companion is not None else None
    return WaveletReport(orth, moment, span, rt, sign, idx_ok, decay, fits["eps0"], fits["eta_hat"], smooth, witness)


def smoothed_basis_for(W: WaveletBasis, replicas: int = 16, seed: int = 0) -> SplineBasis:
    return build_splines(W.system, "smoothed", replicas=replicas, seed=seed)
