"""Frozen empirical constants and the run that produced them.

The values below were fixed after running :func:`calibrate` on the standard
fixture families (see ``calibration/record.json`` for the raw output). They
are thresholds for empirical checks, not proven constants.
"""

from __future__ import annotations

import numpy as np

from .dyadic import build_system
from .fnorms import GrandMaximal, bmo_norm, carleson_norm, h1_wavelet_norms, lp_norm
from .mra import build_splines
from .paraproduct import _random_atom
from .space import parse_fixture
from .wavelet import analyze, build_wavelets

#: max/min of the Carleson-to-BMO ratio over seeded functions on one space
CARLESON_BMO_SPREAD = 64.0
#: max/min of each pairwise ratio of the three wavelet H^1 norms
H1_RATIO_SPREAD = 64.0
#: pairwise H^1 norm ratios must lie in [1/H1_RATIO_BOUND, H1_RATIO_BOUND]
H1_RATIO_BOUND = 64.0
#: each wavelet H^1 norm is at most this multiple of the atomic upper bound
H1_ATOMIC_FACTOR = 64.0
#: upper bound for the L^1 norm of the approximate grand maximal function of an atom
MAXIMAL_ATOM_L1 = 1.0
#: allowed growth of the experiment maxima when n goes from 32 to 128
GROWTH_FACTOR = 2.0

FIXTURES = ["line4", "ring(16)", "cantor(3)", "cloud(64,2,7)"]


def _spread(v) -> float:
    v = np.asarray(v, dtype=float)
    return float(v.max() / v.min())


def norm_ratios(W, count: int = 100, seed: int = 0) -> dict:
    """Carleson/BMO ratios and pairwise H^1 norm ratios over seeded Gaussian functions."""
    S, D = W.space, W.system
    rng = np.random.default_rng(seed)
    car, h1 = [], []
    for _ in range(count):
        g = rng.standard_normal(S.n)
        car.append(carleson_norm(D, analyze(W, g)).value / bmo_norm(S, g).value)
        f = g - np.dot(g, S.weight) / S.total_mass
        h1.append(h1_wavelet_norms(W, f))
    h1 = np.array(h1)
    pairs = {"iii/iv": h1[:, 0] / h1[:, 1], "iii/v": h1[:, 0] / h1[:, 2], "iv/v": h1[:, 1] / h1[:, 2]}
    return {
        "carleson_bmo": {"min": min(car), "max": max(car), "spread": _spread(car)},
        "h1": {k: {"min": float(v.min()), "max": float(v.max()), "spread": _spread(v)} for k, v in pairs.items()},
    }


def maximal_atom_l1(S, count: int = 50, seed: int = 1, q: float = 2.0, M=None) -> list:
    M = GrandMaximal(S) if M is None else M
    rng = np.random.default_rng(seed)
    return [lp_norm(S, M(_random_atom(S, rng, q).function), 1) for _ in range(count)]


def calibrate(fixtures=None, delta: float = 0.25, count: int = 100, atoms: int = 50, seed: int = 0) -> dict:
    out = {"schema": "calibration/v1", "delta": delta, "count": count, "atoms": atoms, "seed": seed, "spaces": []}
    for name in fixtures or FIXTURES:
        S = parse_fixture(name)
        W = build_wavelets(build_splines(build_system(S, delta)))
        rec = {"space": S.name, "n": S.n, **norm_ratios(W, count, seed)}
        ma = maximal_atom_l1(S, atoms, seed + 1)
        rec["maximal_atom_l1"] = {"max": max(ma), "mean": float(np.mean(ma))}
        out["spaces"].append(rec)
    out["frozen"] = {
        "CARLESON_BMO_SPREAD": CARLESON_BMO_SPREAD,
        "H1_RATIO_SPREAD": H1_RATIO_SPREAD,
        "H1_RATIO_BOUND": H1_RATIO_BOUND,
        "H1_ATOMIC_FACTOR": H1_ATOMIC_FACTOR,
        "MAXIMAL_ATOM_L1": MAXIMAL_ATOM_L1,
        "GROWTH_FACTOR": GROWTH_FACTOR,
    }
    return out


if __name__ == "__main__":
    import sys

    from .io import write_json

    path = sys.argv[1] if len(sys.argv) > 1 else "calibration/record.json"
    write_json(path, calibrate())
    print(path)
