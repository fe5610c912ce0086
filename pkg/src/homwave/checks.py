"""Invariant suites for a built pipeline, used by ``homwave check``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dyadic import build_system, verify_cubes
from .fnorms import make_atom
from .mra import MRAError, build_splines, gram, spline_checks, telescope_check
from .paraproduct import paraproducts
from .space import validate_space
from .wavelet import analyze, build_wavelets, synthesize, wavelet_checks

__all__ = ["DEFAULT_TOLERANCES", "Invariant", "SuiteReport", "parse_tolerances", "run_suite"]

DEFAULT_TOLERANCES = {
    "orthonormality": 1e-10,
    "moment": 1e-12,
    "span": 1e-10,
    "parseval": 1e-10,
    "roundtrip": 1e-10,
    "projection": 1e-10,
    "telescope": 1e-10,
    "decomposition": 1e-10,
    "symmetry": 1e-12,
    "atom_identity": 1e-12,
    "mean_zero": 1e-10,
}


def parse_tolerances(items) -> dict:
    """``NAME=VALUE`` overrides; values must be at least machine epsilon."""
    tol = dict(DEFAULT_TOLERANCES)
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep or name not in tol:
            raise ValueError(f"unknown tolerance {item!r}; known: {', '.join(sorted(tol))}")
        v = float(value)
        if not v >= np.finfo(float).eps:
            raise ValueError(f"tolerance {name} must be >= machine epsilon, got {value}")
        tol[name] = v
    return tol


@dataclass
class Invariant:
    module: str
    name: str
    passed: bool
    hard: bool = True
    value: float | None = None
    tol: float | None = None
    witness: dict | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class SuiteReport:
    space: str
    params: dict
    invariants: list = field(default_factory=list)
    measured: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(i.passed for i in self.invariants if i.hard)

    def add(self, *a, **kw):
        self.invariants.append(Invariant(*a, **kw))

    def to_dict(self) -> dict:
        return {
            "schema": "check/v1",
            "space": self.space,
            "params": self.params,
            "ok": self.ok,
            "invariants": [i.to_dict() for i in self.invariants],
            "measured": self.measured,
        }


def _le(value, tol):
    return bool(value <= tol)


def run_suite(S, delta=0.25, mode="haar", samples=16, seed=0, tol=None, trials=20, kmin=None, kmax=None) -> SuiteReport:
    """Build every layer on ``S`` and evaluate its invariants.

    In smoothed mode the spline checks run on the smoothed basis while the
    wavelet and paraproduct suites use the Haar basis of the same system.
    """
    tol = dict(DEFAULT_TOLERANCES, **(tol or {}))
    rep = SuiteReport(S.name, {"delta": delta, "mode": mode, "samples": samples, "seed": seed, "trials": trials})
    rng = np.random.default_rng(seed)

    dbl = validate_space(S)
    rep.measured["doubling"] = dbl.to_dict()
    rep.add("space", "doubling_constant_at_least_1", dbl.C_hat >= 1, value=dbl.C_hat)

    from .dyadic import build_cubes, build_nets

    nets = build_nets(S, delta, kmin, kmax)
    D = build_cubes(nets)
    geo = verify_cubes(D)
    for c in geo.checks:
        rep.add("dyadic", c.name, c.passed, hard=c.hard, value=c.value, witness=c.witness)
    rep.measured["geometry"] = {"c_in": geo.c_in, "cover_ratio": geo.cover_ratio, "max_children": geo.max_children}
    mass_err = max(abs(math.fsum(D.cube_mass[k]) - S.total_mass) for k in D.levels)
    rep.add("dyadic", "level_mass_conservation", mass_err <= 1e-12 * S.total_mass, value=mass_err)

    B = build_splines(D)
    smooth = None
    if mode == "smoothed":
        smooth = build_splines(D, "smoothed", replicas=samples, seed=seed)
    for label, basis in (("haar", B), ("smoothed", smooth)):
        if basis is None:
            continue
        sr = spline_checks(basis)
        rep.add("mra", f"{label}_partition_of_unity", sr.partition_exact, value=sr.partition_error, tol=0.0, witness=sr.witness)
        rep.add("mra", f"{label}_interpolation", sr.interpolation_error == 0, value=sr.interpolation_error, tol=0.0)
        rep.add("mra", f"{label}_support_radius", sr.support_ok, value=sr.support_ratio, tol=8.0)
        if label == "haar":
            rep.add("mra", "haar_refinement", sr.refinement_residual == 0, value=sr.refinement_residual, tol=0.0)
        else:
            rep.measured["smoothed_nesting_defect"] = {str(k): v for k, v in sr.nesting_defect.items()}
        rep.measured[f"{label}_holder"] = sr.holder
    conds = {}
    for k in D.levels:
        try:
            conds[k] = gram(B, k).condition
        except MRAError as e:
            rep.add("mra", f"gram_rank_level_{k}", False, witness={"error": str(e)})
    rep.add("mra", "haar_gram_condition_one", all(abs(c - 1) <= 1e-12 for c in conds.values()), value=max(conds.values()))

    P = {k: B.P_matrix(k) for k in D.levels}
    w = S.weight
    proj = 0.0
    for k in D.levels:
        proj = max(proj, float(np.abs(P[k] @ P[k] - P[k]).max()))
        sa = (w[:, None] * P[k]) - (w[:, None] * P[k]).T
        proj = max(proj, float(np.abs(sa).max()))
        if k < D.k_max:
            proj = max(proj, float(np.abs(P[k + 1] @ P[k] - P[k]).max()))
    rep.add("mra", "projection_algebra", _le(proj, tol["projection"]), value=proj, tol=tol["projection"])
    nest = max((B.nesting_defect(k) for k in range(D.k_min, D.k_max)), default=0.0)
    rep.add("mra", "nesting", nest <= 1e-12, value=nest, tol=1e-12)

    tele = 0.0
    for _ in range(trials):
        f = rng.standard_normal(S.n)
        tele = max(tele, telescope_check(B, f, D.k_min) / np.abs(f).max())
    rep.add("mra", "telescoping", _le(tele, tol["telescope"]), value=tele, tol=tol["telescope"])

    W = build_wavelets(B)
    wr = wavelet_checks(W, smooth, rng_seed=seed)
    rep.add("wavelet", "orthonormality", _le(wr.orthonormality_error, tol["orthonormality"]), value=wr.orthonormality_error, tol=tol["orthonormality"])
    rep.add("wavelet", "vanishing_moment", _le(wr.moment_error, tol["moment"]), value=wr.moment_error, tol=tol["moment"], witness=wr.witness)
    rep.add("wavelet", "span_reproduces_Q", _le(wr.span_error, tol["span"]), value=wr.span_error, tol=tol["span"])
    rep.add("wavelet", "sign_convention", wr.sign_ok)
    rep.add("wavelet", "index_bookkeeping", wr.index_ok)
    rep.add("wavelet", "completeness", len(W) + len(W.coarse) == S.n, value=len(W) + len(W.coarse))
    parseval, rt = 0.0, 0.0
    for _ in range(trials):
        f = rng.standard_normal(S.n)
        c = analyze(W, f)
        nf = float(np.dot(f * f, w))
        parseval = max(parseval, abs(nf - c.energy()) / nf)
        rt = max(rt, float(np.abs(synthesize(W, c) - f).max() / np.abs(f).max()))
    rep.add("wavelet", "parseval", _le(parseval, tol["parseval"]), value=parseval, tol=tol["parseval"])
    rep.add("wavelet", "roundtrip", _le(rt, tol["roundtrip"]), value=rt, tol=tol["roundtrip"])
    rep.add("wavelet", "decay_envelope", wr.decay["pooled"]["violations"] == 0, hard=False, value=wr.decay["pooled"]["violations"])
    rep.measured["wavelet"] = {
        "nu_hat": wr.decay["pooled"]["nu"],
        "C_hat": wr.decay["pooled"]["C"],
        "eps0": None if math.isinf(wr.eps0) else wr.eps0,
        "eta_hat": wr.eta_hat,
        "smoothed": wr.smoothed,
    }

    dec, sym, mz = 0.0, 0.0, 0.0
    for _ in range(trials):
        f, g = rng.standard_normal(S.n), rng.standard_normal(S.n)
        r = paraproducts(B, W, f, g)
        scale = np.abs(f).max() * np.abs(g).max()
        dec = max(dec, r.residual / scale)
        sym = max(sym, float(np.abs(r.pi2 - paraproducts(B, W, g, f).pi1).max()) / scale)
        mz = max(mz, abs(np.dot(r.pi1, w)) / scale, abs(np.dot(r.pi2, w)) / scale)
    rep.add("paraproduct", "exact_decomposition", _le(dec, tol["decomposition"]), value=dec, tol=tol["decomposition"])
    rep.add("paraproduct", "pi2_is_pi1_swapped", _le(sym, tol["symmetry"]), value=sym, tol=tol["symmetry"])
    rep.add("paraproduct", "pi1_pi2_mean_zero", _le(mz, tol["mean_zero"]), value=mz, tol=tol["mean_zero"])
    ident = 0.0
    for _ in range(trials):
        c = int(rng.integers(S.n))
        r = float(np.sort(S.dist[c])[min(S.n - 1, int(rng.integers(1, max(2, S.n // 4))))]) * (1 + 1e-9)
        a = make_atom(S, c, r, seed=int(rng.integers(2**32))).function
        ident = max(ident, float(np.abs(paraproducts(B, W, a, np.ones(S.n)).pi2 - a).max()))
    rep.add("paraproduct", "pi2_atom_one_is_atom", _le(ident, tol["atom_identity"]), value=ident, tol=tol["atom_identity"])
    vi = 0.0
    for j in range(D.k_min, D.k_max):
        rows = W.level_rows(j)
        if rows.size:
            vi = max(vi, float(np.abs((B.s[j] * w) @ W.psi[rows].T).max()))
    rep.add("paraproduct", "spline_wavelet_orthogonality", vi <= 1e-12, value=vi, tol=1e-12)
    return rep
