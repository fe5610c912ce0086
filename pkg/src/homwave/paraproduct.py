"""Paraproducts, the localized operators U_{k,i}, their kernels and CZ diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mra import SplineBasis
from .wavelet import CoeffSeq, WaveletBasis

__all__ = [
    "ParaproductError",
    "ParaproductResult",
    "CZKernelReport",
    "UOperator",
    "paraproducts",
    "paraproduct_series",
    "spline_means",
    "enumerate_family",
    "annulus_sets",
    "max_annulus_scale",
    "annulus_bound",
    "build_Uki",
    "kernel_Kki",
    "cz_diagnostics",
    "operator_norm",
    "operator_sweep",
    "ExperimentConfig",
    "run_space",
    "boundedness_experiment",
]


class ParaproductError(ValueError):
    pass


def _require_haar(B: SplineBasis, W: WaveletBasis | None = None):
    if B.mode != "haar":
        raise ParaproductError("paraproducts need a haar-mode spline basis")
    if W is not None and W.splines is not B:
        raise ParaproductError("wavelet basis was built from a different spline basis")


@dataclass
class ParaproductResult:
    pi1: np.ndarray
    pi2: np.ndarray
    pi3: np.ndarray
    coarse: np.ndarray
    residual: float

    def to_dict(self, ids=None) -> dict:
        def fn(v):
            return dict(zip(ids, map(float, v))) if ids is not None else [float(x) for x in v]

        return {
            "schema": "paraproduct/v1",
            "pi1": fn(self.pi1),
            "pi2": fn(self.pi2),
            "pi3": fn(self.pi3),
            "coarse_term": fn(self.coarse),
            "residual": self.residual,
            "note": "coarse_term = (P_kmin f)(P_kmin g) replaces the vanishing projection at scale -inf on finite spaces",
        }


def paraproducts(B: SplineBasis, W: WaveletBasis | None, f, g) -> ParaproductResult:
    """``fg = Pi1 + Pi2 + Pi3 + S0`` summed over ``k_min <= k < k_max``."""
    _require_haar(B, W)
    S, D = B.space, B.system
    f, g = S.function(f), S.function(g)
    pf = {k: B.P(k, f) for k in D.levels}
    pg = {k: B.P(k, g) for k in D.levels}
    pi1 = np.zeros(S.n)
    pi2 = np.zeros(S.n)
    pi3 = np.zeros(S.n)
    for k in range(D.k_min, D.k_max):
        qf = pf[k + 1] - pf[k]
        qg = pg[k + 1] - pg[k]
        pi1 += pf[k] * qg
        pi2 += qf * pg[k]
        pi3 += qf * qg
    s0 = pf[D.k_min] * pg[D.k_min]
    resid = float(np.abs(f * g - pi1 - pi2 - pi3 - s0).max())
    return ParaproductResult(pi1, pi2, pi3, s0, resid)


def spline_means(B: SplineBasis, g) -> dict:
    """``<g, s^j_alpha / nu^j_alpha>`` keyed by ``(j, alpha)``."""
    g = B.space.function(g)
    out = {}
    for j in B.levels:
        vals = B.normalized_spline(j) @ (B.space.weight * g)
        for a, v in zip(B.system.centers(j), vals):
            out[(j, int(a))] = float(v)
    return out


def paraproduct_series(B: SplineBasis, W: WaveletBasis, a, g_coeffs: CoeffSeq, g_spline_means: dict):
    """The three series for an atom against data describing ``g`` only through
    its wavelet coefficients and normalized-spline pairings."""
    _require_haar(B, W)
    S, D = B.space, B.system
    a = S.function(np.asarray(getattr(a, "function", a)))
    if g_coeffs.basis is not W or len(g_coeffs.wavelet) != len(W):
        raise ParaproductError("coefficient sequence does not match the wavelet basis")
    means = {}
    for j in range(D.k_min, D.k_max):
        row = []
        for al in D.centers(j):
            key = (j, int(al))
            if key not in g_spline_means and (j, S.ids[al]) not in g_spline_means:
                raise ParaproductError(f"missing spline mean at level {j}, center {S.ids[al]}")
            row.append(g_spline_means.get(key, g_spline_means.get((j, S.ids[al]))))
        means[j] = np.array(row, dtype=float)
    wa = S.weight * a
    ca = W.psi @ wa
    b = g_coeffs.wavelet
    pi1, pi2, pi3 = np.zeros(S.n), np.zeros(S.n), np.zeros(S.n)
    for j in range(D.k_min, D.k_max):
        rows = W.level_rows(j)
        qa = ca[rows] @ W.psi[rows]
        qg = b[rows] @ W.psi[rows]
        pa = (B.normalized_spline(j) @ wa) @ B.s[j]
        pg = means[j] @ B.s[j]
        pi1 += pa * qg
        pi2 += qa * pg
        pi3 += qa * qg
    return pi1, pi2, pi3


def enumerate_family(W: WaveletBasis) -> list:
    """Index pairs ``(j, beta)`` sorted by level then point order; prefixes are the cutoffs."""
    return sorted(W.index)


def annulus_sets(W: WaveletBasis, k: int) -> dict:
    """``(j, beta) -> level-j centers alpha`` with ``2^k delta^{j+1} <= d(x_alpha, y_beta) < 2^{k+1} delta^{j+1}``, in point order."""
    cache = W.__dict__.setdefault("_annulus_cache", {})
    if k in cache:
        return cache[k]
    S, D = W.space, W.system
    delta = D.delta
    out = {}
    for j, b in W.index:
        c = D.centers(j)
        d = S.dist[b, c]
        lo, hi = 2.0**k * delta ** (j + 1), 2.0 ** (k + 1) * delta ** (j + 1)
        out[(j, b)] = c[(d >= lo) & (d < hi)]
    cache[k] = out
    return out


def max_annulus_scale(W: WaveletBasis) -> int:
    """Smallest ``k_U >= 0`` beyond which every annulus is empty."""
    D = W.system
    k = 0
    while 2.0 ** (k + 1) * D.delta**D.k_max <= W.space.diameter:
        k += 1
    return k


def annulus_bound(W: WaveletBasis, k: int) -> int:
    """``m_k = N0 2^{(k+1) G0}`` from the measured covering count (at least the realized maximum)."""
    N0 = W.space.doubling.N0_hat
    bound = N0 * 2 ** ((k + 1) * math.log2(N0))
    realized = max((len(v) for v in annulus_sets(W, k).values()), default=0)
    return max(int(round(bound)), realized)


@dataclass
class UOperator:
    """Dense ``U^N_{k,i}``: ``matrix @ g`` applies the operator to a function.

    ``synthesis`` has the damped products as rows, one per enumerated index;
    the kernel with respect to ``mu`` is ``synthesis.T @ psi_rows``.
    """

    k: int
    i: int
    N: int
    nu: float
    damping: float
    synthesis: np.ndarray
    analysis: np.ndarray
    weight: np.ndarray = field(repr=False)

    @property
    def kernel(self) -> np.ndarray:
        return self.synthesis.T @ self.analysis

    @property
    def matrix(self) -> np.ndarray:
        return self.kernel * self.weight[None, :]

    def __call__(self, g) -> np.ndarray:
        return self.synthesis.T @ (self.analysis @ (self.weight * g))

    def truncate(self, N: int) -> "UOperator":
        """The operator for the cutoff ``N`` (a prefix of the enumerated family)."""
        if not 0 <= N <= self.N:
            raise ParaproductError(f"cutoff N={N} outside [0, {self.N}]")
        return UOperator(self.k, self.i, N, self.nu, self.damping, self.synthesis[:N], self.analysis[:N], self.weight)

    def sigma_max(self) -> float:
        # the analysis rows are orthonormal in L^2(mu), so only the synthesis side matters
        rows = self.synthesis[np.any(self.synthesis != 0, axis=1)]
        if rows.size == 0:
            return 0.0
        return float(np.linalg.norm(rows * np.sqrt(self.weight), 2))

    def metadata(self) -> dict:
        return {"k": self.k, "i": self.i, "N": self.N, "nu_hat": self.nu, "damping": self.damping}


def operator_norm(M: np.ndarray, weight: np.ndarray) -> float:
    """Largest singular value of ``M`` acting on ``L^2(mu)``."""
    sw = np.sqrt(weight)
    return float(np.linalg.norm(sw[:, None] * M / sw[None, :], 2)) if M.size else 0.0


def build_Uki(B: SplineBasis, W: WaveletBasis, k: int, i: int, N: int | None = None, nu: float | None = None) -> UOperator:
    """``U^N_{k,i} g = sum_{(j,beta) in C_N} (g, psi^j_beta) e^{nu delta 2^{k-2}} s^j_{alpha_i} psi^j_beta``.

    Annulus members are relabeled in point order; missing ``i``-th members
    contribute zero splines.
    """
    _require_haar(B, W)
    if k < 0:
        raise ParaproductError("k must be nonnegative")
    if i < 1:
        raise ParaproductError("i must be at least 1")
    m_k = annulus_bound(W, k)
    if i > m_k:
        raise ParaproductError(f"i={i} exceeds m_k={m_k}")
    S, D = B.space, B.system
    nu = W.nu_hat if nu is None else float(nu)
    damping = math.exp(nu * D.delta * 2.0 ** (k - 2))
    family = enumerate_family(W)
    N = len(family) if N is None else int(N)
    if not 0 <= N <= len(family):
        raise ParaproductError(f"cutoff N={N} outside [0, {len(family)}]")
    sets = annulus_sets(W, k)
    synth = np.zeros((N, S.n))
    anal = np.zeros((N, S.n))
    for t, (j, b) in enumerate(family[:N]):
        row = W.position[(j, b)]
        anal[t] = W.psi[row]
        members = sets[(j, b)]
        if len(members) >= i:
            alpha = int(members[i - 1])
            synth[t] = damping * B.spline(j, alpha) * W.psi[row]
    return UOperator(k, i, N, nu, damping, synth, anal, S.weight)


@dataclass
class CZKernelReport:
    kernel_id: dict
    C_size: float
    size_witness: dict | None
    holder: dict
    c_K: float

    def to_dict(self) -> dict:
        return {"kernel": self.kernel_id, "C_size": self.C_size, "size_witness": self.size_witness, "holder": self.holder, "c_K": self.c_K}


def cz_diagnostics(S, K: np.ndarray, s_list, c_K: float = 0.5, kernel_id=None) -> CZKernelReport:
    """Measured size and Hölder constants of ``K`` in both variables off the diagonal."""
    n = S.n
    d = S.dist
    V = S.pair_volume
    off = ~np.eye(n, dtype=bool)
    size = np.where(off, np.abs(K) * V, 0.0)
    C_size = float(size.max())
    sw = None
    if C_size > 0:
        x, y = np.unravel_index(np.argmax(size), size.shape)
        sw = {"x": S.ids[x], "y": S.ids[y]}
    holder = {}
    for s in s_list:
        best = {"x": (0.0, None), "y": (0.0, None)}
        for x in range(n):
            # vary the first variable: (x, xt, y) with d(x,y) >= c_K d(x,xt) > 0
            dxy = d[x][None, :]  # over y
            dxx = d[x][:, None]  # over xt
            ok = (dxx > 0) & (dxy >= c_K * dxx) & off[x][None, :] & off  # off: xt != y
            if ok.any():
                diff = np.abs(K[x][None, :] - K)  # [xt, y]
                ratio = np.where(ok, diff * V[x][None, :] / np.where(ok, (dxx / np.where(dxy > 0, dxy, 1)) ** s, 1.0), 0.0)
                m = float(ratio.max())
                if m > best["x"][0]:
                    xt, y = np.unravel_index(np.argmax(ratio), ratio.shape)
                    best["x"] = (m, {"x": S.ids[x], "x_tilde": S.ids[xt], "y": S.ids[y]})
            # vary the second variable: (x, y, yt) with d(x,y) >= c_K d(y,yt) > 0
            dxy2 = d[x][:, None]  # over y
            dyy = d  # [y, yt]
            ok2 = (dyy > 0) & (dxy2 >= c_K * dyy) & off[x][:, None] & off[x][None, :]
            if ok2.any():
                diff2 = np.abs(K[x][:, None] - K[x][None, :])
                ratio2 = np.where(ok2, diff2 * V[x][:, None] / np.where(ok2, (dyy / np.where(dxy2 > 0, dxy2, 1)) ** s, 1.0), 0.0)
                m2 = float(ratio2.max())
                if m2 > best["y"][0]:
                    y, yt = np.unravel_index(np.argmax(ratio2), ratio2.shape)
                    best["y"] = (m2, {"x": S.ids[x], "y": S.ids[y], "y_tilde": S.ids[yt]})
        holder[f"{float(s):.6g}"] = {
            "C_reg_x": best["x"][0],
            "witness_x": best["x"][1],
            "C_reg_y": best["y"][0],
            "witness_y": best["y"][1],
        }
    return CZKernelReport(kernel_id or {}, C_size, sw, holder, c_K)


def kernel_Kki(B: SplineBasis, W: WaveletBasis, k: int, i: int, N: int | None = None, nu: float | None = None, s_list=None, c_K: float = 0.5):
    """Kernel matrix of ``U^N_{k,i}`` and its Calderón-Zygmund diagnostics."""
    U = build_Uki(B, W, k, i, N, nu)
    K = U.kernel
    if s_list is None:
        eta = W.fits["eta_hat"]
        s_list = sorted({eta / 2, eta})
    rep = cz_diagnostics(B.space, K, s_list, c_K, {"k": k, "i": i, "N": U.N, **U.metadata()})
    return K, rep


def operator_sweep(B: SplineBasis, W: WaveletBasis) -> dict:
    """``sigma_max(U_{k,i})`` over every nonempty ``(k, i)`` plus the worst monotonicity defect in ``N``."""
    rows, defect = [], 0.0
    for k in range(max_annulus_scale(W) + 1):
        width = max((len(v) for v in annulus_sets(W, k).values()), default=0)
        for i in range(1, width + 1):
            U = build_Uki(B, W, k, i)
            sig = [U.truncate(N).sigma_max() for N in range(U.N + 1)]
            defect = max(defect, max((a - b for a, b in zip(sig, sig[1:])), default=0.0))
            rows.append({"k": k, "i": i, "sigma_max": sig[-1], "damping": U.damping})
    top = max((r["sigma_max"] for r in rows), default=0.0)
    return {"operators": rows, "max_sigma": top, "monotone_defect": defect, "nu_hat": W.nu_hat}


@dataclass
class ExperimentConfig:
    fixtures: list = field(default_factory=lambda: ["line4", "ring(16)"])
    seeds: list = field(default_factory=lambda: [0])
    atoms: int = 50
    functions: int = 10
    delta: float = 0.25
    q: float = 2.0
    operators: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known) - {"schema"}
        if unknown:
            raise ParaproductError(f"unknown experiment keys: {sorted(unknown)}")
        cfg = cls(**known)
        if cfg.atoms < 1 or cfg.functions < 1:
            raise ParaproductError("atom and function counts must be at least 1")
        if not 0 < cfg.delta <= 0.5:
            raise ParaproductError("delta must lie in (0, 1/2]")
        return cfg


def _random_atom(S, rng, q):
    from .fnorms import make_atom

    c = int(rng.integers(S.n))
    order = np.sort(S.dist[c])
    m = int(rng.integers(2, max(3, S.n // 4) + 1))
    r = float(order[min(m, S.n) - 1]) * (1 + 1e-9)
    return make_atom(S, c, r, q, seed=int(rng.integers(2**32)))


def _bmo_functions(S, rng, count):
    out = []
    for t in range(count):
        if t % 2 == 0:
            x0 = int(rng.integers(S.n))
            eps = S.min_distance * float(rng.uniform(0.25, 2.0))
            out.append(("log", np.log(S.dist[x0] + eps)))
        else:
            out.append(("random", rng.uniform(-1.0, 1.0, S.n)))
    return out


def _summary(values) -> dict:
    v = np.asarray([x for x in values if np.isfinite(x)], dtype=float)
    if v.size == 0:
        return {"max": None, "p50": None, "p95": None, "count": 0}
    return {"max": float(v.max()), "p50": float(np.percentile(v, 50)), "p95": float(np.percentile(v, 95)), "count": int(v.size)}


def run_space(S, seed: int, cfg: ExperimentConfig) -> tuple[list, dict]:
    """All atom x BMO-function pairs on one space; returns records and per-space diagnostics."""
    from .dyadic import build_system
    from .fnorms import GrandMaximal, bmo_norm, bmo_plus, h1_wavelet_norms, llog_norm, lp_norm
    from .mra import build_splines
    from .wavelet import build_wavelets

    D = build_system(S, cfg.delta)
    B = build_splines(D)
    W = build_wavelets(B)
    M = GrandMaximal(S)
    rng = np.random.default_rng([seed, S.n])
    atoms = [_random_atom(S, rng, cfg.q) for _ in range(cfg.atoms)]
    gs = _bmo_functions(S, rng, cfg.functions)
    norms = [(bmo_norm(S, g).value, bmo_plus(S, g).value) for _, g in gs]
    records = []
    for a in atoms:
        for (kind, g), (bmo, bplus) in zip(gs, norms):
            if bmo == 0:
                continue
            r = paraproducts(B, W, a.function, g)
            scale = max(float(np.abs(a.function).max() * np.abs(g).max()), 1e-300)
            records.append(
                {
                    "space": S.name,
                    "seed": seed,
                    "atom_ball": {"center": S.ids[a.center], "radius": a.radius},
                    "g_kind": kind,
                    "r1": h1_wavelet_norms(W, r.pi1)[1] / bmo,
                    "r2": llog_norm(S, M(r.pi2)) / bplus,
                    "r3": lp_norm(S, r.pi3, 1) / bmo,
                    "residual": r.residual / scale,
                    "coarse": float(np.abs(r.coarse).max()),
                }
            )
    diag = {"space": S.name, "seed": seed, "n": S.n, "nu_hat": W.nu_hat}
    if cfg.operators:
        sweep = operator_sweep(B, W)
        diag.update({"max_sigma": sweep["max_sigma"], "monotone_defect": sweep["monotone_defect"]})
    return records, diag


def boundedness_experiment(config) -> dict:
    """Ratios ``r1, r2, r3`` over sampled atoms and BMO functions on every configured space."""
    from .space import SpaceError, parse_fixture

    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    records, spaces = [], []
    for name in cfg.fixtures:
        try:
            S = parse_fixture(name)
        except SpaceError as e:
            raise ParaproductError(f"cannot build fixture {name!r}: {e}") from e
        for seed in cfg.seeds:
            rec, diag = run_space(S, int(seed), cfg)
            records += rec
            diag.update({key: _summary(r[key] for r in rec) for key in ("r1", "r2", "r3")})
            diag["residual_max"] = max((r["residual"] for r in rec), default=0.0)
            spaces.append(diag)
    return {
        "schema": "experiment/v1",
        "config": {k: getattr(cfg, k) for k in cfg.__dataclass_fields__},
        "note": "atoms are mean-zero, so the coarse term (P_kmin a)(P_kmin g) vanishes",
        "records": records,
        "spaces": spaces,
        "summary": {key: _summary(r[key] for r in records) for key in ("r1", "r2", "r3", "residual")},
    }
