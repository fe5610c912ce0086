"""Acceptance criteria 1-10 at their stated tolerances.

Every test carries a ``criterion`` marker; the terminal summary prints one
PASS/FAIL line per criterion (see conftest.py).
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from homwave import calibration
from homwave.calibration import FIXTURES, maximal_atom_l1, norm_ratios
from homwave.dyadic import build_system, verify_cubes
from homwave.fnorms import GrandMaximal, bmo_norm, carleson_norm, h1_wavelet_norms, llog_functional, llog_norm, lp_norm, make_atom
from homwave.mra import build_splines, spline_checks, telescope_check
from homwave.paraproduct import boundedness_experiment, build_Uki, kernel_Kki, paraproducts
from homwave.space import fixture, parse_fixture
from homwave.wavelet import analyze, build_wavelets, synthesize

ROOT = Path(__file__).resolve().parents[1]
R2 = math.sqrt(2)

CLOUDS = [
    f"cloud({n},{dim},{seed})"
    for seed, (n, dim) in enumerate(
        [(16, 2), (24, 3), (32, 2), (40, 3), (48, 2), (64, 3), (80, 2), (96, 3),
         (100, 2), (112, 3), (128, 2), (144, 3), (160, 2), (176, 3), (192, 2), (200, 3)]
    )
]
GEOMETRY_SPACES = FIXTURES + CLOUDS


def pipeline(S, delta=0.25):
    B = build_splines(build_system(S, delta))
    return B, build_wavelets(B)


def random_atom(S, rng):
    c = int(rng.integers(S.n))
    m = int(rng.integers(2, max(3, S.n // 4) + 1))
    r = float(np.sort(S.dist[c])[min(m, S.n) - 1]) * (1 + 1e-9)
    return make_atom(S, c, r, seed=int(rng.integers(2**32)))


# -- 1 ----------------------------------------------------------------------

HARD = ("partition", "nesting", "child_distance", "outer_ball")


@pytest.mark.criterion(1, title="dyadic geometry on 20 seeded spaces")
@pytest.mark.parametrize("name", GEOMETRY_SPACES)
def test_c1_dyadic_geometry(name):
    assert len(GEOMETRY_SPACES) == 20
    S = parse_fixture(name)
    assert S.n <= 200
    t0 = time.perf_counter()
    rep = verify_cubes(build_system(S, 1 / 16))
    for key in HARD:
        assert rep[key].passed, (key, rep[key].witness)
    assert rep.ok
    inner = verify_cubes(build_system(S, 1 / 24))
    assert inner["inner_ball_third"].passed and inner.c_in >= 1 / 3
    for key in HARD:
        assert inner[key].passed
    assert time.perf_counter() - t0 < 10


# -- 2 ----------------------------------------------------------------------


@pytest.mark.criterion(2, title="spline partition of unity and interpolation")
@pytest.mark.parametrize("name", FIXTURES)
@pytest.mark.parametrize("mode", ["haar", "smoothed"])
def test_c2_spline_exactness(name, mode):
    D = build_system(parse_fixture(name), 0.25)
    B = build_splines(D, mode, replicas=16, seed=0) if mode == "smoothed" else build_splines(D)
    r = spline_checks(B)
    assert r.partition_error == 0 and r.interpolation_error == 0
    if mode == "haar":
        assert r.refinement_residual == 0


# -- 3 ----------------------------------------------------------------------


@pytest.mark.criterion(3, title="wavelet Gram, vanishing integrals, Parseval")
@pytest.mark.parametrize("name", FIXTURES)
def test_c3_wavelet_algebra(name):
    S = parse_fixture(name)
    _, W = pipeline(S)
    A = W.analysis_matrix
    assert np.abs((A * S.weight) @ A.T - np.eye(S.n)).max() <= 1e-10
    assert np.abs(W.psi @ S.weight).max() <= 1e-12
    rng = np.random.default_rng(3)
    for _ in range(100):
        f = rng.standard_normal(S.n)
        nf = float(np.dot(f * f, S.weight))
        assert abs(analyze(W, f).energy() - nf) <= 1e-10 * nf


@pytest.mark.criterion(3, title="wavelet Gram, vanishing integrals, Parseval")
def test_c3_line4_hand_basis():
    _, W = pipeline(fixture("line4"), 0.5)
    hand = {
        (-1, "p1"): np.array([-1, 1, 0, 0]) / R2,
        (-1, "p3"): np.array([0, 0, -1, 1]) / R2,
        (-2, "p2"): np.array([-1, -1, 1, 1]) / 2,
    }
    for (k, b), ref in hand.items():
        assert np.abs(W.wavelet(k, b) - ref).max() <= 1e-12
    assert np.abs(W.coarse[0] - 0.5).max() <= 1e-12


# -- 4 ----------------------------------------------------------------------


@pytest.mark.criterion(4, title="telescoping and product decomposition")
def test_c4_decomposition():
    t0 = time.perf_counter()
    for name in FIXTURES:
        S = parse_fixture(name)
        B, W = pipeline(S)
        rng = np.random.default_rng(4)
        for _ in range(100):
            f, g = rng.standard_normal((2, S.n))
            assert telescope_check(B, f, B.system.k_min) <= 1e-10 * np.abs(f).max()
            r = paraproducts(B, W, f, g)
            assert r.residual <= 1e-10 * np.abs(f).max() * np.abs(g).max()
    B, W = pipeline(fixture("line4"), 0.5)
    x = np.array([0.0, 1, 2, 3])
    r = paraproducts(B, W, x, x)
    assert np.abs(r.pi3 - 1.25).max() <= 1e-12
    assert np.abs(r.pi1 - [-1.75, -1.25, 0.25, 2.75]).max() <= 1e-12
    assert np.abs(r.pi2 - [-1.75, -1.25, 0.25, 2.75]).max() <= 1e-12
    assert np.abs(r.coarse - 2.25).max() <= 1e-12
    assert time.perf_counter() - t0 < 1


# -- 5 ----------------------------------------------------------------------


@pytest.mark.criterion(5, title="atom identities")
@pytest.mark.parametrize("name", FIXTURES)
def test_c5_atoms(name):
    S = parse_fixture(name)
    B, W = pipeline(S)
    rng = np.random.default_rng(5)
    one = np.ones(S.n)
    for _ in range(50):
        a = random_atom(S, rng).function
        r = paraproducts(B, W, a, one)
        assert np.abs(r.pi2 - a).max() <= 1e-12
        g = rng.uniform(-1, 1, S.n)
        r = paraproducts(B, W, a, g)
        assert np.abs(r.coarse).max() <= 1e-10 * np.abs(a).max()
        assert r.residual <= 1e-10 * np.abs(a).max() * np.abs(g).max()


# -- 6 ----------------------------------------------------------------------


@pytest.mark.criterion(6, title="norm oracles on line4")
def test_c6_norm_oracles():
    S = fixture("line4")
    _, W = pipeline(S, 0.5)
    g = np.array([0.0, 0, 1, 1])
    # brute-force BMO: the worst ball is {p1, p2} with mean oscillation 1/2
    assert abs(bmo_norm(S, g).value - 0.5) <= 1e-12
    # one coefficient 1 on the top cube of mass 4: sqrt(1 / 4)
    assert abs(carleson_norm(W.system, analyze(W, g)).value - 0.5) <= 1e-12
    atom = np.array([1.0, -1, 0, 0]) / 2
    # a single coefficient 1/sqrt(2) on a cube of mass 2
    assert abs(h1_wavelet_norms(W, atom)[1] - 1.0) <= 1e-12


# -- 7 ----------------------------------------------------------------------


@pytest.mark.criterion(7, title="Carleson/BMO and H^1 norm ratio spreads")
@pytest.mark.parametrize("name", FIXTURES)
def test_c7_norm_equivalences(name):
    _, W = pipeline(parse_fixture(name))
    r = norm_ratios(W, count=100, seed=0)
    assert r["carleson_bmo"]["spread"] <= calibration.CARLESON_BMO_SPREAD
    for pair in r["h1"].values():
        assert pair["spread"] <= calibration.H1_RATIO_SPREAD


@pytest.mark.criterion(7, title="Carleson/BMO and H^1 norm ratio spreads")
def test_c7_calibration_record_matches_frozen_constants():
    rec = json.loads((ROOT / "calibration" / "record.json").read_text())
    assert rec["schema"] == "calibration/v1"
    for key, value in rec["frozen"].items():
        assert getattr(calibration, key) == value
    for sp in rec["spaces"]:
        assert sp["carleson_bmo"]["spread"] <= calibration.CARLESON_BMO_SPREAD
        assert sp["maximal_atom_l1"]["max"] <= calibration.MAXIMAL_ATOM_L1


# -- 8 ----------------------------------------------------------------------

SWEEP = ["cloud(32,2,1)", "cloud(128,2,1)"]


@pytest.fixture(scope="module")
def experiment():
    t0 = time.perf_counter()
    rep = boundedness_experiment({"fixtures": FIXTURES + SWEEP, "atoms": 50, "functions": 10, "operators": True})
    return rep, time.perf_counter() - t0


@pytest.mark.criterion(8, title="empirical boundedness and n-sweep growth")
def test_c8_finite_on_every_fixture(experiment):
    rep, elapsed = experiment
    assert elapsed < 300
    for sp in rep["spaces"]:
        assert sp["r1"]["count"] == sp["r3"]["count"] == 500
        for key in ("r1", "r2", "r3"):
            assert math.isfinite(sp[key]["max"])
        assert sp["residual_max"] <= 1e-10
        assert sp["monotone_defect"] <= 1e-12
        assert math.isfinite(sp["max_sigma"])


@pytest.mark.criterion(8, title="empirical boundedness and n-sweep growth")
def test_c8_growth_from_32_to_128(experiment):
    rep, _ = experiment
    by = {sp["space"]: sp for sp in rep["spaces"]}
    small, large = by[SWEEP[0]], by[SWEEP[1]]
    for key in ("r1", "r2", "r3"):
        assert large[key]["max"] <= calibration.GROWTH_FACTOR * small[key]["max"], key
    assert large["max_sigma"] <= calibration.GROWTH_FACTOR * small["max_sigma"]


# -- 9 ----------------------------------------------------------------------


@pytest.mark.criterion(9, title="L^log and grand maximal bounds")
@pytest.mark.parametrize("name", FIXTURES)
def test_c9_llog_and_maximal(name):
    S = parse_fixture(name)
    M = GrandMaximal(S)
    rng = np.random.default_rng(9)
    tested = [rng.standard_normal(S.n) for _ in range(10)] + [random_atom(S, rng).function for _ in range(10)]
    for f in tested:
        m = M(f)
        lam = llog_norm(S, m)
        assert lam <= lp_norm(S, m, 1)
        assert 1 - 1e-6 <= llog_functional(S, m, lam) <= 1
    assert max(maximal_atom_l1(S, 50, seed=1, M=M)) <= calibration.MAXIMAL_ATOM_L1


# -- 10 ---------------------------------------------------------------------


@pytest.mark.criterion(10, title="CZ kernel diagnostics")
@pytest.mark.parametrize("name", ["line4", "ring(16)"])
def test_c10_kernel_diagnostics(name):
    B, W = pipeline(parse_fixture(name))
    eta = W.fits["eta_hat"]
    K, rep = kernel_Kki(B, W, 0, 1)
    assert math.isfinite(rep.C_size) and rep.size_witness is not None
    h = rep.holder[f"{eta / 2:.6g}"]
    assert math.isfinite(h["C_reg_x"]) and h["witness_x"] is not None
    assert math.isfinite(h["C_reg_y"]) and h["witness_y"] is not None
    U = build_Uki(B, W, 0, 1)
    errs = [np.abs(U.truncate(N).kernel - K).max() for N in range(U.N + 1)]
    assert errs[-1] == 0
    assert all(b <= a for a, b in zip(errs, errs[1:]))
    # the kernel reproduces the operator
    g = np.random.default_rng(10).standard_normal(B.space.n)
    assert np.allclose(U(g), K @ (B.space.weight * g), atol=1e-12)
    assert np.allclose(synthesize(W, analyze(W, g)), g, atol=1e-12)
